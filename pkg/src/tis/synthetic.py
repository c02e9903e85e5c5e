"""Synthetic desk-scale dataset: bright organs with a low-contrast lesion.

Each sample renders one large primitive (sphere or cuboid, alternating by
draw) and one small spherical lesion placed fully inside it, then adds
Gaussian intensity noise.  The lesion's intensity offset is a fraction of
the organ's, making it the hard, low-contrast target class.  Labels:
0 background, 1 organ, 2 lesion (the lesion overwrites the organ).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpecError
from .rng import Rng
from .volume_io import LabelMask, Volume


@dataclass(frozen=True)
class SyntheticSpec:
    extents: tuple[int, int, int] = (32, 32, 32)
    categories: int = 3
    noise: float = 0.25
    organ_intensity: float = 1.0
    lesion_intensity: float = 1.3     # low contrast against the organ
    organ_radius: tuple[float, float] = (7.0, 10.0)
    lesion_radius: tuple[float, float] = (2.0, 3.5)

    def __post_init__(self):
        if self.categories != 3:
            raise SpecError("synthetic generator renders exactly 3 categories")
        if any(e % 2 or e < 8 for e in self.extents):
            raise SpecError(f"extents must be even and at least 8, got {self.extents}")
        if self.organ_radius[1] * 2 >= min(self.extents):
            raise SpecError(
                f"organ radius {self.organ_radius[1]} cannot fit in {self.extents}")
        if self.lesion_radius[1] + 1.0 >= self.organ_radius[0]:
            raise SpecError("lesion radius range does not fit inside the organ")
        if self.noise < 0:
            raise SpecError(f"noise must be nonnegative, got {self.noise}")


def _coords(extents):
    return np.meshgrid(*(np.arange(e, dtype=np.float64) for e in extents),
                       indexing="ij")


def generate_sample(spec: SyntheticSpec, rng: Rng):
    """One (Volume, LabelMask, nominal_volumes) triple.

    nominal_volumes holds the analytic voxel volume per foreground class,
    used by tests to bound discretization drift.
    """
    ext = np.array(spec.extents, dtype=np.float64)
    r_org = float(rng.uniform() * (spec.organ_radius[1] - spec.organ_radius[0])
                  + spec.organ_radius[0])
    r_les = float(rng.uniform() * (spec.lesion_radius[1] - spec.lesion_radius[0])
                  + spec.lesion_radius[0])
    cuboid = bool(rng.integers(0, 2))

    # organ center leaves room for the primitive on every axis
    lo = spec.organ_radius[1] + 1.0
    center = np.array([float(rng.uniform()) * (e - 2 * lo) + lo for e in ext])

    xs, ys, zs = _coords(spec.extents)
    if cuboid:
        half = np.array([r_org * 0.8] * 3)
        organ = ((np.abs(xs - center[0]) <= half[0])
                 & (np.abs(ys - center[1]) <= half[1])
                 & (np.abs(zs - center[2]) <= half[2]))
        slack = half - (r_les + 1.0)
        organ_nominal = float(np.prod(2 * half))
    else:
        organ = ((xs - center[0]) ** 2 + (ys - center[1]) ** 2
                 + (zs - center[2]) ** 2) <= r_org ** 2
        slack = np.array([(r_org - r_les - 1.0) / np.sqrt(3.0)] * 3)
        organ_nominal = 4.0 / 3.0 * np.pi * r_org ** 3

    offs = np.array([float(rng.uniform()) * 2.0 - 1.0 for _ in range(3)]) * slack
    lcenter = center + offs
    lesion = ((xs - lcenter[0]) ** 2 + (ys - lcenter[1]) ** 2
              + (zs - lcenter[2]) ** 2) <= r_les ** 2
    lesion_nominal = 4.0 / 3.0 * np.pi * r_les ** 3

    labels = np.zeros(spec.extents, dtype=np.uint8)
    labels[organ] = 1
    labels[lesion] = 2

    raw = np.zeros(spec.extents)
    raw[organ] = spec.organ_intensity
    raw[lesion] = spec.lesion_intensity
    raw += rng.normal(spec.extents, std=spec.noise)

    nominal = {1: organ_nominal - lesion_nominal, 2: lesion_nominal}
    return Volume.from_raw(raw), LabelMask(labels, spec.categories), nominal


def generate(spec: SyntheticSpec, n: int, rng: Rng) -> list[tuple[Volume, LabelMask]]:
    """n samples, each from an independent child stream of `rng`."""
    if n < 1:
        raise SpecError(f"sample count must be at least 1, got {n}")
    out = []
    for i in range(n):
        vol, mask, _ = generate_sample(spec, rng.derive("sample", i))
        out.append((vol, mask))
    return out
