"""Seeded synthetic scenes: label maps plus Monte-Carlo softmax stacks.

Each region has two noise knobs:

* ``softness`` (aleatoric): every sample spreads probability mass away from
  its favoured class. Raises predictive entropy but not mutual information.
* ``flip_rate`` (epistemic): each sample independently favours a decoy class
  for the *whole region* with this probability. Samples disagree, so mutual
  information rises; when most samples flip the prediction is wrong.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensors import ClassMap, ProbStack, ScalarMap


@dataclass(frozen=True)
class Region:
    """A rectangle ``(top, left, height, width)`` or disk ``(center_row, center_col, radius)``."""

    shape: str
    geometry: tuple
    true_class: int
    softness: float = 0.0
    flip_rate: float = 0.0
    decoy_class: Optional[int] = None

    def mask(self, height: int, width: int) -> np.ndarray:
        rows, cols = np.ogrid[:height, :width]
        if self.shape == "rectangle":
            top, left, h, w = self.geometry
            return (rows >= top) & (rows < top + h) & (cols >= left) & (cols < left + w)
        cy, cx, r = self.geometry
        return (rows - cy) ** 2 + (cols - cx) ** 2 <= r * r


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    height: int
    width: int
    class_count: int
    samples: int
    regions: tuple = field(default_factory=tuple)
    background_class: int = 0
    background_softness: float = 0.0

    def validate(self):
        """Raise ``ValueError`` on any out-of-range field or region geometry."""
        if self.height < 1 or self.width < 1:
            raise ValueError(f"image must be at least 1x1, got {self.height}x{self.width}")
        if self.class_count < 2 or self.samples < 1:
            raise ValueError("need class_count >= 2 and samples >= 1")
        if not 0 <= self.background_class < self.class_count:
            raise ValueError(f"background_class {self.background_class} out of range")
        if not 0.0 <= self.background_softness <= 1.0:
            raise ValueError("background_softness must lie in [0, 1]")
        for i, reg in enumerate(self.regions):
            where = f"region {i}"
            if reg.shape == "rectangle":
                if len(reg.geometry) != 4:
                    raise ValueError(f"{where}: rectangle needs (top, left, height, width)")
                top, left, h, w = reg.geometry
                if h < 1 or w < 1 or top < 0 or left < 0 or top + h > self.height \
                        or left + w > self.width:
                    raise ValueError(f"{where}: rectangle {reg.geometry} outside "
                                     f"{self.height}x{self.width} image")
            elif reg.shape == "disk":
                if len(reg.geometry) != 3:
                    raise ValueError(f"{where}: disk needs (center_row, center_col, radius)")
                cy, cx, r = reg.geometry
                if r < 0 or cy - r < 0 or cx - r < 0 or cy + r >= self.height \
                        or cx + r >= self.width:
                    raise ValueError(f"{where}: disk {reg.geometry} outside "
                                     f"{self.height}x{self.width} image")
            else:
                raise ValueError(f"{where}: unknown shape {reg.shape!r}")
            for name in ("true_class", "decoy_class"):
                cls = getattr(reg, name)
                if cls is not None and not 0 <= cls < self.class_count:
                    raise ValueError(f"{where}: {name} {cls} out of range")
            if not (0.0 <= reg.softness <= 1.0 and 0.0 <= reg.flip_rate <= 1.0):
                raise ValueError(f"{where}: softness and flip_rate must lie in [0, 1]")


def _decoy(reg: Region, c: int) -> int:
    return reg.decoy_class if reg.decoy_class is not None else (reg.true_class + 1) % c


def generate(spec: SynthSpec):
    """Return ``(gt, stack)`` for ``spec``; identical specs give identical output."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    h, w, c, t = spec.height, spec.width, spec.class_count, spec.samples

    gt = np.full((h, w), spec.background_class, dtype=np.int64)
    softness = np.full((h, w), spec.background_softness)
    owner = np.full((h, w), -1)
    for i, reg in enumerate(spec.regions):
        m = reg.mask(h, w)
        gt[m] = reg.true_class
        softness[m] = reg.softness
        owner[m] = i

    # one flip draw per (region, sample), shared by the region's pixels
    flips = rng.random((len(spec.regions), t)) < np.array(
        [[reg.flip_rate] for reg in spec.regions]).reshape(-1, 1)
    favoured = np.broadcast_to(gt, (t, h, w)).copy()
    for i, reg in enumerate(spec.regions):
        m = owner == i
        for s in np.flatnonzero(flips[i]):
            favoured[s][m] = _decoy(reg, c)

    off = softness / c
    on = 1.0 - softness * (c - 1) / c
    onehot = favoured[:, np.newaxis] == np.arange(c)[None, :, None, None]
    probs = np.where(onehot, on, off)
    return ClassMap(gt, class_count=c), ProbStack(probs)


def misaligned_uncertainty(umap: ScalarMap, seed: int) -> ScalarMap:
    """Spatially shuffle ``umap`` with a seeded permutation.

    The value multiset (hence min, max and mean) is preserved while any
    alignment with prediction errors is destroyed.
    """
    rng = np.random.default_rng(seed)
    values = umap.values.ravel()
    return ScalarMap(values[rng.permutation(values.size)].reshape(umap.shape))


# -- configuration files ------------------------------------------------------

def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


def load_spec(path, seed: Optional[int] = None) -> SynthSpec:
    """Read an INI file with an ``[image]`` section and one ``[region ...]`` section per region.

    Example::

        [image]
        seed = 7
        height = 64
        width = 64
        classes = 4
        samples = 16
        background_class = 0

        [region car]
        shape = rectangle
        geometry = 8, 8, 16, 24
        class = 1
        softness = 0.2
        flip_rate = 0.7
        decoy_class = 2
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        parser.read_file(fh)
    return spec_from_config(parser, seed)


def spec_from_config(parser: configparser.ConfigParser, seed: Optional[int] = None) -> SynthSpec:
    if "image" not in parser:
        raise ValueError("synth config needs an [image] section")
    img = parser["image"]
    try:
        regions = []
        for name in parser.sections():
            if not name.startswith("region"):
                continue
            sec = parser[name]
            decoy = sec.get("decoy_class")
            regions.append(Region(
                shape=sec.get("shape", "rectangle"),
                geometry=_ints(sec["geometry"]),
                true_class=int(sec["class"]),
                softness=sec.getfloat("softness", 0.0),
                flip_rate=sec.getfloat("flip_rate", 0.0),
                decoy_class=int(decoy) if decoy is not None else None,
            ))
        return SynthSpec(
            seed=seed if seed is not None else img.getint("seed", 0),
            height=int(img["height"]),
            width=int(img["width"]),
            class_count=int(img["classes"]),
            samples=img.getint("samples", 1),
            regions=tuple(regions),
            background_class=img.getint("background_class", 0),
            background_softness=img.getfloat("background_softness", 0.0),
        )
    except KeyError as exc:
        raise ValueError(f"incomplete synth config: {exc}") from exc
