"""Per-pixel uncertainty maps from a stack of Monte-Carlo softmax samples.

All quantities are in nats.
"""
import numpy as np

from .tensors import ScalarMap, as_prob_array, sample_mean

# probabilities below this are treated as exact zeros (0 log 0 = 0)
_TINY = 1e-300

MEASURES = ("predictive_entropy", "mutual_information")
_ALIASES = {"entropy": "predictive_entropy", "mi": "mutual_information"}


def _entropy(p: np.ndarray, axis: int) -> np.ndarray:
    safe = np.where(p > _TINY, p, 1.0)
    return -np.sum(np.where(p > _TINY, p * np.log(safe), 0.0), axis=axis)


def _entropies(stack):
    """Unclamped predictive entropy and mean per-sample entropy."""
    p = as_prob_array(stack)
    total = _entropy(sample_mean(p), axis=0)
    if p.shape[0] == 1:
        expected = total.copy()
    else:
        expected = np.sort(_entropy(p, axis=1), axis=0).sum(axis=0) / p.shape[0]
    return total, expected, p.shape[1]


def predictive_entropy(stack) -> ScalarMap:
    """Entropy of the sample-mean class distribution, clamped to ``[0, log C]``.

    With a single sample this is the plain softmax entropy of a deterministic
    network.
    """
    total, _, c = _entropies(stack)
    return ScalarMap.clamped(total, np.log(c))


def mutual_information(stack) -> ScalarMap:
    """Predictive entropy minus mean per-sample entropy, clamped at 0.

    Measures disagreement between samples; identically zero when every sample
    is the same (in particular when ``T == 1``).
    """
    total, expected, c = _entropies(stack)
    return ScalarMap.clamped(total - expected, np.log(c))


def uncertainty_map(stack, measure="predictive_entropy") -> ScalarMap:
    """Dispatch to one of :data:`MEASURES` (``"entropy"``/``"mi"`` also accepted)."""
    name = _ALIASES.get(measure, measure)
    if name == "predictive_entropy":
        return predictive_entropy(stack)
    if name == "mutual_information":
        return mutual_information(stack)
    raise ValueError(f"unknown uncertainty measure {measure!r}; expected one of {MEASURES}")
