"""Patch-based evaluation of uncertainty maps.

Prediction, ground truth and uncertainty map are traversed with ``w x w``
windows. A patch is *accurate* when the fraction of its scorable pixels that
are predicted correctly is at least the accuracy threshold, and *uncertain*
when its mean uncertainty is at least ``u_th``. The four resulting counts give
``p(accurate | certain)``, ``p(uncertain | inaccurate)`` and PAvPU.

Conventions:

* ``accurate``  iff ``correct / scorable >= accuracy_threshold`` (float division)
* ``uncertain`` iff ``mean(window) >= u_th``, decided in exact arithmetic
* sweeps use a strict ``>`` at ``t == 1`` so every patch is certain there
* patches whose ground truth is entirely the ignore id are skipped
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensors import SCALAR_FLOOR, ClassMap, ScalarMap

EDGE_POLICIES = ("drop_partial", "include_partial")
DEFAULT_T_GRID = tuple(i / 10 for i in range(11))

CONVENTIONS = {
    "accurate": "patch_accuracy >= accuracy_threshold",
    "uncertain": "mean_patch_uncertainty >= u_th",
    "sweep_t1": "mean_patch_uncertainty > u_th (every patch certain)",
    "all_ignored_patches": "skipped",
    "aggregation": "counts summed over images before taking ratios",
}

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class PatchConfig:
    window: int = 4
    stride: Optional[int] = None
    accuracy_threshold: float = 0.5
    edge_policy: str = "drop_partial"

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.window)
        if self.window < 1 or self.stride < 1:
            raise ValueError(f"window and stride must be >= 1, got {self.window}, {self.stride}")
        if not 0.0 <= self.accuracy_threshold <= 1.0:
            raise ValueError(f"accuracy_threshold must lie in [0, 1], got {self.accuracy_threshold}")
        if self.edge_policy not in EDGE_POLICIES:
            raise ValueError(f"edge_policy must be one of {EDGE_POLICIES}, got {self.edge_policy!r}")


class Window(NamedTuple):
    top: int
    left: int
    height: int
    width: int

    def slices(self):
        return (slice(self.top, self.top + self.height),
                slice(self.left, self.left + self.width))


def _starts(n: int, cfg: PatchConfig) -> range:
    if cfg.edge_policy == "include_partial":
        return range(0, n, cfg.stride)
    return range(0, n - cfg.window + 1, cfg.stride)


def enumerate_patches(height: int, width: int, cfg: PatchConfig = PatchConfig()) -> list:
    """Row-major list of :class:`Window` covering a ``height x width`` image.

    ``drop_partial`` keeps only full windows; ``include_partial`` starts a window
    at every stride step inside the image and clips it to the bounds.
    """
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be >= 1, got {height}x{width}")
    w = cfg.window
    return [Window(top, left, min(w, height - top), min(w, width - left))
            for top in _starts(height, cfg) for left in _starts(width, cfg)]


def patch_accuracy(pred: ClassMap, gt: ClassMap, window: Window) -> Optional[float]:
    """Fraction of scorable pixels predicted correctly; ``None`` if all are ignored."""
    sl = window.slices()
    g = gt.values[sl]
    keep = gt.valid_mask()[sl]
    scorable = int(keep.sum())
    if scorable == 0:
        return None
    return int((pred.values[sl] == g)[keep].sum()) / scorable


def patch_uncertainty(umap: ScalarMap, window: Window) -> float:
    """Mean of the uncertainty values inside ``window``."""
    vals = umap.values[window.slices()]
    return math.fsum(vals.ravel().tolist()) / vals.size


# -- thresholds ---------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSpec:
    """How to obtain ``u_th``.

    ``interpolated`` uses ``u_min + t (u_max - u_min)``, ``validation_mean``
    the mean of all pixels, ``absolute`` a fixed value.
    """

    mode: str
    value: float = 0.0

    def __post_init__(self):
        if self.mode not in ("interpolated", "validation_mean", "absolute"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if self.mode == "interpolated" and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"interpolation fraction must lie in [0, 1], got {self.value}")
        if self.mode == "absolute" and not self.value >= 0.0:
            raise ValueError(f"absolute threshold must be >= 0, got {self.value}")

    @classmethod
    def interpolated(cls, t: float) -> "ThresholdSpec":
        return cls("interpolated", float(t))

    @classmethod
    def validation_mean(cls) -> "ThresholdSpec":
        return cls("validation_mean")

    @classmethod
    def absolute(cls, u_th: float) -> "ThresholdSpec":
        return cls("absolute", float(u_th))

    @classmethod
    def parse(cls, text: str) -> "ThresholdSpec":
        """Parse ``mean``, ``t=<frac>`` or ``abs=<value>``."""
        text = text.strip()
        if text == "mean":
            return cls.validation_mean()
        key, sep, val = text.partition("=")
        if sep and key in ("t", "abs"):
            try:
                number = float(val)
            except ValueError:
                pass
            else:
                return cls.interpolated(number) if key == "t" else cls.absolute(number)
        raise ValueError(f"threshold must be 'mean', 't=<frac>' or 'abs=<value>', got {text!r}")


def _as_list(x) -> list:
    if x is None:
        return []
    if isinstance(x, (ClassMap, ScalarMap, np.ndarray)):
        return [x]
    return list(x)


def _map_values(umaps) -> list:
    return [(u.values if isinstance(u, ScalarMap) else np.asarray(u, dtype=np.float64))
            for u in _as_list(umaps)]


def uncertainty_range(umaps) -> tuple:
    """Pixel-level ``(u_min, u_max)`` over one or more maps."""
    vals = [v for v in _map_values(umaps) if v.size]
    if not vals:
        raise ValueError("no uncertainty pixels supplied")
    return min(float(v.min()) for v in vals), max(float(v.max()) for v in vals)


def resolve_threshold(umaps, spec: ThresholdSpec) -> float:
    """Bind ``spec`` to data and return ``u_th``."""
    vals = [v for v in _map_values(umaps) if v.size]
    if not vals:
        raise ValueError("cannot resolve a threshold from an empty set of maps")
    if spec.mode == "absolute":
        return spec.value
    if spec.mode == "validation_mean":
        n = sum(v.size for v in vals)
        return math.fsum(itertools.chain.from_iterable(v.ravel().tolist() for v in vals)) / n
    return interpolate_threshold(*uncertainty_range(vals), spec.value)


def interpolate_threshold(u_min: float, u_max: float, t: float) -> float:
    """``u_min + t (u_max - u_min)``, returning the extrema exactly at ``t`` = 0 or 1."""
    if t == 0.0:
        return u_min
    if t == 1.0:
        return u_max
    return u_min + t * (u_max - u_min)


# -- classification -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PatchConfusion:
    """Counts of accurate/inaccurate x certain/uncertain patches.

    The grids have one cell per enumerated window (row-major); ``evaluated``
    is False for cells skipped because their ground truth is all ignored.
    Confusions summed over several images carry no grids.
    """

    n_ac: int
    n_au: int
    n_ic: int
    n_iu: int
    skipped_patches: int = 0
    accuracy_grid: Optional[np.ndarray] = field(default=None, repr=False)
    uncertainty_grid: Optional[np.ndarray] = field(default=None, repr=False)
    evaluated: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def total(self) -> int:
        return self.n_ac + self.n_au + self.n_ic + self.n_iu

    @property
    def counts(self) -> tuple:
        return self.n_ac, self.n_au, self.n_ic, self.n_iu

    def __add__(self, other: "PatchConfusion") -> "PatchConfusion":
        return PatchConfusion(self.n_ac + other.n_ac, self.n_au + other.n_au,
                              self.n_ic + other.n_ic, self.n_iu + other.n_iu,
                              self.skipped_patches + other.skipped_patches)


class PatchMetrics(NamedTuple):
    """The three conditional metrics; ``None`` marks a zero denominator."""

    p_accurate_given_certain: Optional[float]
    p_uncertain_given_inaccurate: Optional[float]
    pavpu: Optional[float]


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def conditional_metrics(conf: PatchConfusion) -> PatchMetrics:
    return PatchMetrics(
        _ratio(conf.n_ac, conf.n_ac + conf.n_ic),
        _ratio(conf.n_iu, conf.n_ic + conf.n_iu),
        _ratio(conf.n_ac + conf.n_iu, conf.total),
    )


def _window_sums(arr: np.ndarray, cfg: PatchConfig, tops: range, lefts: range) -> np.ndarray:
    w, s = cfg.window, cfg.stride
    pad_h = max(0, tops[-1] + w - arr.shape[0])
    pad_w = max(0, lefts[-1] + w - arr.shape[1])
    if pad_h or pad_w:
        arr = np.pad(arr, ((0, pad_h), (0, pad_w)))
    view = sliding_window_view(arr, (w, w))[::s, ::s]
    return view.sum(axis=(2, 3))


class _PatchStats:
    """Per-window sums for one image, reusable across thresholds."""

    def __init__(self, pred: ClassMap, gt: ClassMap, umap: ScalarMap, cfg: PatchConfig):
        if not (pred.shape == gt.shape == umap.shape):
            raise ValueError(
                f"shape mismatch: pred {pred.shape}, gt {gt.shape}, umap {umap.shape}")
        self.cfg = cfg
        self.u = umap.values
        h, w = gt.shape
        tops, lefts = _starts(h, cfg), _starts(w, cfg)
        self.grid_shape = (len(tops), len(lefts))
        if not len(tops) or not len(lefts):
            self.valid = np.zeros(self.grid_shape, dtype=np.int64)
            self.correct = self.valid.copy()
            return
        valid = gt.valid_mask()
        correct = (pred.values == gt.values) & valid
        self.valid = _window_sums(valid.astype(np.int64), cfg, tops, lefts)
        self.correct = _window_sums(correct.astype(np.int64), cfg, tops, lefts)
        self.usum = _window_sums(self.u, cfg, tops, lefts)
        self.uabs = _window_sums(np.abs(self.u), cfg, tops, lefts)
        self.tops = np.asarray(tops)[:, None]
        self.lefts = np.asarray(lefts)[None, :]
        self.area = (np.minimum(cfg.window, h - self.tops) *
                     np.minimum(cfg.window, w - self.lefts))

    def accurate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.correct / self.valid >= self.cfg.accuracy_threshold

    def uncertain(self, u_th: float, strict: bool = False) -> np.ndarray:
        if self.valid.size == 0:
            return np.zeros(self.grid_shape, dtype=bool)
        mean = self.usum / self.area
        # bound on |float mean - exact mean|; windows inside it are decided exactly
        band = 2.0 * (self.area + 2) * _EPS * (self.uabs / self.area + abs(u_th))
        diff = mean - u_th
        out = diff > 0 if strict else diff >= 0
        for r, c in np.argwhere(np.abs(diff) <= band):
            top, left = int(self.tops[r, 0]), int(self.lefts[0, c])
            vals = self.u[top:top + self.cfg.window, left:left + self.cfg.window]
            excess = math.fsum(itertools.chain(vals.ravel().tolist(),
                                               itertools.repeat(-u_th, vals.size)))
            out[r, c] = excess > 0 if strict else excess >= 0
        return out

    def confusion(self, u_th: float, strict: bool = False) -> PatchConfusion:
        evaluated = self.valid > 0
        acc = self.accurate() & evaluated
        unc = self.uncertain(u_th, strict) & evaluated
        inacc = evaluated & ~acc
        cert = evaluated & ~unc
        return PatchConfusion(
            n_ac=int((acc & cert).sum()), n_au=int((acc & unc).sum()),
            n_ic=int((inacc & cert).sum()), n_iu=int((inacc & unc).sum()),
            skipped_patches=int((~evaluated).sum()),
            accuracy_grid=acc, uncertainty_grid=unc, evaluated=evaluated)


def _check_u_th(u_th: float):
    if not (u_th >= SCALAR_FLOOR and math.isfinite(u_th)):
        raise ValueError(f"u_th must be finite and >= 0, got {u_th}")


def classify_patches(pred: ClassMap, gt: ClassMap, umap: ScalarMap,
                     cfg: PatchConfig = PatchConfig(), u_th: float = 0.0) -> PatchConfusion:
    """Classify every window of one image and tally the four patch counts."""
    _check_u_th(u_th)
    return _PatchStats(pred, gt, umap, cfg).confusion(u_th)


def _triples(preds, gts, umaps) -> list:
    preds, gts, umaps = _as_list(preds), _as_list(gts), _as_list(umaps)
    if not (len(preds) == len(gts) == len(umaps)) or not preds:
        raise ValueError(
            f"need matching non-empty image lists, got {len(preds)}, {len(gts)}, {len(umaps)}")
    return list(zip(preds, gts, [u if isinstance(u, ScalarMap) else ScalarMap(u) for u in umaps]))


@dataclass(frozen=True)
class PatchEvaluation:
    u_th: float
    confusion: PatchConfusion
    metrics: PatchMetrics
    per_image: tuple = field(repr=False)


def evaluate(preds, gts, umaps, cfg: PatchConfig = PatchConfig(),
             threshold: ThresholdSpec = ThresholdSpec.validation_mean(),
             reference_maps=None) -> PatchEvaluation:
    """Dataset-level evaluation with one global ``u_th``.

    ``u_th`` is resolved over ``reference_maps`` (default: ``umaps``); counts
    from all images are summed before computing the metrics.
    """
    triples = _triples(preds, gts, umaps)
    u_th = resolve_threshold(reference_maps if reference_maps is not None
                             else [u for _, _, u in triples], threshold)
    _check_u_th(u_th)
    per_image = tuple(_PatchStats(p, g, u, cfg).confusion(u_th) for p, g, u in triples)
    total = sum(per_image[1:], per_image[0] + PatchConfusion(0, 0, 0, 0))
    return PatchEvaluation(u_th, total, conditional_metrics(total), per_image)


# -- sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    t: float
    u_th: float
    confusion: PatchConfusion
    metrics: PatchMetrics


@dataclass(frozen=True)
class SweepCurve:
    points: tuple
    conventions: dict = field(default_factory=lambda: dict(CONVENTIONS))

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def default_t_grid(n: int = 11) -> list:
    """``n`` evenly spaced fractions from 0 to 1 inclusive."""
    if n < 2:
        raise ValueError(f"grid needs at least 2 points, got {n}")
    return [i / (n - 1) for i in range(n)]


def threshold_sweep(preds, gts, umaps, cfg: PatchConfig = PatchConfig(),
                    t_grid: Sequence[float] = DEFAULT_T_GRID,
                    reference_maps=None) -> SweepCurve:
    """Evaluate the three metrics for ``u_th = u_min + t (u_max - u_min)`` per ``t``.

    Accepts one image or lists of images (counts are summed per point).
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ValueError("t_grid is empty")
    if any(not 0.0 <= t <= 1.0 for t in t_grid):
        raise ValueError("t values must lie in [0, 1]")
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("t values must be strictly increasing")
    triples = _triples(preds, gts, umaps)
    refs = reference_maps if reference_maps is not None else [u for _, _, u in triples]
    u_min, u_max = uncertainty_range(refs)
    stats = [_PatchStats(p, g, u, cfg) for p, g, u in triples]
    points = []
    for t in t_grid:
        u_th = interpolate_threshold(u_min, u_max, t)
        strict = t == 1.0
        confs = [s.confusion(u_th, strict) for s in stats]
        total = sum(confs, PatchConfusion(0, 0, 0, 0))
        points.append(SweepPoint(t, u_th, total, conditional_metrics(total)))
    return SweepCurve(tuple(points))
