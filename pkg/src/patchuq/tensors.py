"""Dense value types shared by every part of the toolkit.

Three shapes cover everything that flows through an evaluation:

* :class:`ClassMap`   -- ``H x W`` integer labels (ground truth or prediction)
* :class:`ProbStack`  -- ``T x C x H x W`` Monte-Carlo softmax samples
* :class:`ScalarMap`  -- ``H x W`` real values (uncertainty maps)

Constructors only check array rank so that malformed data can still be
wrapped and passed to the ``validate_*`` functions, which never raise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

#: absolute tolerance on per-pixel probability sums
PROB_SUM_TOL = 1e-6
#: most negative value a ScalarMap may hold (rounding noise from clamped maps)
SCALAR_FLOOR = -1e-12


class InvariantError(ValueError):
    """A tensor failed validation; ``violation`` carries the details."""

    def __init__(self, violation: "Violation"):
        super().__init__(str(violation))
        self.violation = violation


@dataclass(frozen=True)
class Violation:
    """First offending element found by a ``validate_*`` function."""

    index: tuple
    message: str

    def __str__(self):
        return f"{self.message} at {self.index}"


def _frozen(values, dtype=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ClassMap:
    """Integer label map with a class count and an optional ignore id."""

    values: np.ndarray
    class_count: int
    ignore_id: Optional[int] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"ClassMap needs a 2-D array, got shape {values.shape}")
        if not np.issubdtype(values.dtype, np.integer):
            if values.size and not np.all(np.equal(np.mod(values, 1), 0)):
                raise ValueError("ClassMap values must be integers")
            values = values.astype(np.int64)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "class_count", int(self.class_count))
        if self.ignore_id is not None:
            object.__setattr__(self, "ignore_id", int(self.ignore_id))

    @property
    def shape(self):
        return self.values.shape

    def valid_mask(self) -> np.ndarray:
        """Boolean mask of pixels that are not the ignore id."""
        if self.ignore_id is None:
            return np.ones(self.shape, dtype=bool)
        return self.values != self.ignore_id


@dataclass(frozen=True, eq=False)
class ProbStack:
    """``T x C x H x W`` stack of per-sample class probabilities (float64)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 3:
            values = values[np.newaxis]
        if values.ndim != 4:
            raise ValueError(
                f"ProbStack needs a T x C x H x W array, got shape {values.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def samples(self) -> int:
        return self.values.shape[0]

    @property
    def class_count(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        """Spatial shape ``(H, W)``."""
        return self.values.shape[2:]

    def mean(self) -> np.ndarray:
        """Sample-mean class distribution, shape ``C x H x W``."""
        return sample_mean(self.values)


@dataclass(frozen=True, eq=False)
class ScalarMap:
    """``H x W`` map of reals; stored as float64."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"ScalarMap needs a 2-D array, got shape {values.shape}")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def clamped(cls, values, upper=None) -> "ScalarMap":
        """Build a map with values clamped to ``[0, upper]``."""
        return cls(np.clip(values, 0.0, upper))


Tensor = Union[ClassMap, ProbStack, ScalarMap]


def _first(mask: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.argwhere(mask)[0])


def validate_class_map(cmap: ClassMap) -> Optional[Violation]:
    """Return ``None`` if ``cmap`` is well formed, else the first violation."""
    h, w = cmap.shape
    if h < 1 or w < 1:
        return Violation((), f"empty class map of shape {cmap.shape}")
    if cmap.class_count < 2:
        return Violation((), f"class_count must be >= 2, got {cmap.class_count}")
    if cmap.ignore_id is not None and 0 <= cmap.ignore_id < cmap.class_count:
        return Violation((), f"ignore_id {cmap.ignore_id} lies inside [0, {cmap.class_count})")
    v = cmap.values
    bad = (v < 0) | (v >= cmap.class_count)
    if cmap.ignore_id is not None:
        bad &= v != cmap.ignore_id
    if bad.any():
        idx = _first(bad)
        return Violation(idx, f"class id {int(v[idx])} outside [0, {cmap.class_count})")
    return None


def validate_prob_stack(stack: ProbStack) -> Optional[Violation]:
    """Return ``None`` if ``stack`` is a valid probability stack.

    Reports the first ``(t, h, w)`` whose entries leave ``[0, 1]``, are not
    finite, or do not sum to one within :data:`PROB_SUM_TOL`.
    """
    p = stack.values
    t, c, h, w = p.shape
    if min(t, h, w) < 1:
        return Violation((), f"empty probability stack of shape {p.shape}")
    if c < 2:
        return Violation((), f"class_count must be >= 2, got {c}")
    with np.errstate(invalid="ignore"):
        out_of_range = ~((p >= 0.0) & (p <= 1.0))  # also catches NaN
        bad = out_of_range.any(axis=1) | (np.abs(p.sum(axis=1) - 1.0) > PROB_SUM_TOL)
    if bad.any():
        idx = _first(bad)
        return Violation(idx, f"probabilities {p[idx[0], :, idx[1], idx[2]].tolist()} "
                              "are not a distribution")
    return None


def validate_scalar_map(smap: ScalarMap) -> Optional[Violation]:
    """Return ``None`` if every value is finite and not below ``-1e-12``."""
    v = smap.values
    if v.size == 0:
        return Violation((), f"empty scalar map of shape {v.shape}")
    with np.errstate(invalid="ignore"):
        bad = ~np.isfinite(v) | (v < SCALAR_FLOOR)
    if bad.any():
        idx = _first(bad)
        return Violation(idx, f"value {v[idx]!r} is negative or not finite")
    return None


def check(value: Tensor) -> Tensor:
    """Validate ``value`` and return it, raising :class:`InvariantError` on failure."""
    validator = {ClassMap: validate_class_map,
                 ProbStack: validate_prob_stack,
                 ScalarMap: validate_scalar_map}[type(value)]
    violation = validator(value)
    if violation is not None:
        raise InvariantError(violation)
    return value


def as_prob_array(stack) -> np.ndarray:
    """``T x C x H x W`` float64 view of a ProbStack or array-like."""
    if isinstance(stack, ProbStack):
        return stack.values
    return ProbStack(stack).values


def sample_mean(p: np.ndarray) -> np.ndarray:
    """Mean over axis 0, independent of sample order.

    Samples are sorted before summation so any permutation of the stack gives
    a bit-identical result.
    """
    if p.shape[0] == 1:
        return p[0].copy()
    return np.sort(p, axis=0).sum(axis=0) / p.shape[0]


def argmax_prediction(stack) -> ClassMap:
    """Class of highest sample-mean probability per pixel.

    Ties go to the lowest class id (``np.argmax`` returns the first maximum).
    """
    p = as_prob_array(stack)
    pred = np.argmax(sample_mean(p), axis=0)
    return ClassMap(pred, class_count=p.shape[1])
