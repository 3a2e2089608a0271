"""Confidence calibration: reliability bins, ECE/MCE and temperature scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .segmetrics import UndefinedMetricError
from .tensors import ClassMap, ProbStack, as_prob_array, sample_mean

DEFAULT_BINS = 15
TEMPERATURE_BOUNDS = (0.05, 50.0)
# log(0) floor when probabilities are given instead of log-probabilities
_LOG_FLOOR = 1e-300
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class CalibrationBins:
    """Equal-width confidence bins over ``(0, 1]``.

    Bin ``b`` (0-based) holds confidences in ``(b/B, (b+1)/B]``; a confidence of
    exactly 0 goes to the first bin.
    """

    counts: np.ndarray
    confidence_sum: np.ndarray
    correct: np.ndarray

    @classmethod
    def from_arrays(cls, confidence, correct, n_bins: int = DEFAULT_BINS) -> "CalibrationBins":
        if n_bins < 1:
            raise ValueError(f"need at least one bin, got {n_bins}")
        confidence = np.asarray(confidence, dtype=np.float64).ravel()
        correct = np.asarray(correct, dtype=bool).ravel()
        if confidence.shape != correct.shape:
            raise ValueError("confidence and correctness arrays differ in size")
        edges = np.arange(n_bins + 1) / n_bins
        idx = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, n_bins - 1)
        return cls(np.bincount(idx, minlength=n_bins),
                   np.bincount(idx, weights=confidence, minlength=n_bins),
                   np.bincount(idx, weights=correct, minlength=n_bins))

    @classmethod
    def from_summary(cls, counts, mean_confidence, accuracy) -> "CalibrationBins":
        """Build bins directly from per-bin counts, mean confidences and accuracies."""
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts, counts * np.asarray(mean_confidence, dtype=np.float64),
                   counts * np.asarray(accuracy, dtype=np.float64))

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def mean_confidence(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.confidence_sum / self.counts, np.nan)

    @property
    def accuracy(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.correct / self.counts, np.nan)

    def gaps(self) -> np.ndarray:
        """``|accuracy - confidence|`` for occupied bins."""
        occupied = self.counts > 0
        return np.abs(self.accuracy[occupied] - self.mean_confidence[occupied])


def _flat_valid(gt: ClassMap, shape):
    if gt.shape != tuple(shape):
        raise ValueError(f"shape mismatch: probabilities {tuple(shape)} vs gt {gt.shape}")
    return gt.valid_mask()


def bin_confidences(stack, gt: ClassMap, n_bins: int = DEFAULT_BINS) -> CalibrationBins:
    """Bin non-ignored pixels by the max of their sample-mean distribution."""
    p = as_prob_array(stack)
    keep = _flat_valid(gt, p.shape[2:])
    mean = sample_mean(p)
    confidence = mean.max(axis=0)[keep]
    correct = np.argmax(mean, axis=0)[keep] == gt.values[keep]
    return CalibrationBins.from_arrays(confidence, correct, n_bins)


def ece(bins: CalibrationBins) -> float:
    """Count-weighted mean of the per-bin accuracy/confidence gap."""
    if bins.total == 0:
        raise UndefinedMetricError("ECE of an empty bin set")
    occupied = bins.counts > 0
    return float(np.sum(bins.counts[occupied] / bins.total * bins.gaps()))


def mce(bins: CalibrationBins) -> float:
    """Largest accuracy/confidence gap over occupied bins."""
    if bins.total == 0:
        raise UndefinedMetricError("MCE of an empty bin set")
    return float(bins.gaps().max())


# -- temperature scaling ------------------------------------------------------

def _log_probs(log_probs) -> np.ndarray:
    """``C x H x W`` log-probabilities from a ProbStack (logged) or an array."""
    if isinstance(log_probs, ProbStack):
        if log_probs.samples != 1:
            raise ValueError("temperature scaling needs a single-sample stack")
        return np.log(np.maximum(log_probs.values[0], _LOG_FLOOR))
    x = np.asarray(log_probs, dtype=np.float64)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ValueError("temperature scaling needs a single-sample stack")
        x = x[0]
    if x.ndim != 3:
        raise ValueError(f"expected C x H x W log-probabilities, got shape {x.shape}")
    return x


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=0, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def nll(log_probs, gt: ClassMap, temperature: float = 1.0) -> float:
    """Mean negative log-likelihood of ``softmax(log_probs / T)`` on scorable pixels."""
    x = _log_probs(log_probs)
    keep = _flat_valid(gt, x.shape[1:])
    if not keep.any():
        raise ValueError("no scorable pixels for temperature scaling")
    z = x[:, keep]
    labels = gt.values[keep].astype(np.int64)
    logp = _log_softmax(z / temperature)
    return float(-logp[labels, np.arange(labels.size)].mean())


def golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Minimise a unimodal ``f`` on ``[lo, hi]`` until the bracket is below ``tol``."""
    a, b = lo, hi
    c, d = b - _INV_PHI * (b - a), a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def temperature_scale(log_probs, gt: ClassMap, bounds=TEMPERATURE_BOUNDS, tol: float = 1e-3):
    """Fit the temperature minimising NLL and return ``(T*, rescaled ProbStack)``.

    Golden-section search runs over ``log T``; it stops once the bracket in
    ``T`` is narrower than ``tol``. Probabilities may be passed in place of
    logits since softmax ignores per-pixel shifts.
    """
    x = _log_probs(log_probs)
    keep = _flat_valid(gt, x.shape[1:])
    if not keep.any():
        raise ValueError("no scorable pixels for temperature scaling")
    z = x[:, keep]
    labels = gt.values[keep].astype(np.int64)
    cols = np.arange(labels.size)

    def objective(log_t):
        return -_log_softmax(z / math.exp(log_t))[labels, cols].mean()

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    # the bracket in T is exp(b) - exp(a) <= exp(b) * (b - a) <= hi_T * width
    log_tol = tol / bounds[1]
    temperature = math.exp(golden_section(objective, lo, hi, log_tol))
    return temperature, rescale(x, temperature)


def rescale(log_probs, temperature: float) -> ProbStack:
    """``softmax(log_probs / T)`` as a single-sample ProbStack."""
    x = _log_probs(log_probs)
    return ProbStack(np.exp(_log_softmax(x / temperature))[np.newaxis])


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    mce: float
    temperature: float
    nll: float


def calibration_report(stack, gt: ClassMap, n_bins: int = DEFAULT_BINS,
                       scale: bool = True) -> CalibrationReport:
    """ECE, MCE and NLL, after temperature scaling when ``scale`` is set.

    Multi-sample stacks are reduced to their sample mean first.
    """
    p = as_prob_array(stack)
    x = np.log(np.maximum(sample_mean(p), _LOG_FLOOR))
    temperature = 1.0
    if scale:
        temperature, scaled = temperature_scale(x, gt)
    else:
        scaled = ProbStack(sample_mean(p)[np.newaxis])
    bins = bin_confidences(scaled, gt, n_bins)
    return CalibrationReport(ece(bins), mce(bins), temperature, nll(x, gt, temperature))
