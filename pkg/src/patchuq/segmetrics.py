"""Pixel accuracy, mean accuracy and mean IoU from a class confusion matrix."""
from dataclasses import dataclass

import numpy as np

from .tensors import ClassMap


class UndefinedMetricError(ValueError):
    """A score was requested from a confusion with nothing to score."""


@dataclass(frozen=True, eq=False)
class SegConfusion:
    """``counts[i, j]`` = pixels of true class ``i`` predicted as ``j``."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, class_count: int) -> "SegConfusion":
        return cls(np.zeros((class_count, class_count), dtype=np.int64))

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "SegConfusion") -> "SegConfusion":
        return SegConfusion(self.counts + other.counts)


def accumulate_confusion(pred: ClassMap, gt: ClassMap, existing: SegConfusion = None) -> SegConfusion:
    """Add one count per non-ignored ground-truth pixel to ``existing``."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.class_count != gt.class_count:
        raise ValueError(
            f"class count mismatch: pred {pred.class_count} vs gt {gt.class_count}")
    c = gt.class_count
    if existing is None:
        existing = SegConfusion.empty(c)
    elif existing.class_count != c:
        raise ValueError(f"confusion has {existing.class_count} classes, maps have {c}")
    keep = gt.valid_mask()
    t = gt.values[keep].astype(np.int64)
    p = pred.values[keep].astype(np.int64)
    if t.size and (t.min() < 0 or t.max() >= c or p.min() < 0 or p.max() >= c):
        raise ValueError("class ids outside [0, class_count) in non-ignored pixels")
    counts = np.bincount(t * c + p, minlength=c * c).reshape(c, c)
    return existing + SegConfusion(counts)


def pixel_accuracy(conf: SegConfusion) -> float:
    total = conf.total
    if total == 0:
        raise UndefinedMetricError("pixel accuracy of an empty confusion")
    return int(np.trace(conf.counts)) / total


def per_class_accuracy(conf: SegConfusion) -> np.ndarray:
    """Recall per class; NaN for classes absent from the ground truth."""
    t = conf.counts.sum(axis=1)
    diag = np.diag(conf.counts)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(t > 0, diag / t, np.nan)


def per_class_iou(conf: SegConfusion) -> np.ndarray:
    """IoU per class; NaN where the union is empty."""
    diag = np.diag(conf.counts)
    union = conf.counts.sum(axis=1) + conf.counts.sum(axis=0) - diag
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, diag / union, np.nan)


def _nanmean(values, what):
    kept = values[~np.isnan(values)]
    if kept.size == 0:
        raise UndefinedMetricError(f"{what}: no class has a non-zero denominator")
    return float(kept.mean())


def mean_accuracy(conf: SegConfusion) -> float:
    """Mean per-class recall over classes present in the ground truth."""
    return _nanmean(per_class_accuracy(conf), "mean accuracy")


def mean_iou(conf: SegConfusion) -> float:
    """Mean IoU over classes with a non-empty union."""
    return _nanmean(per_class_iou(conf), "mean IoU")
