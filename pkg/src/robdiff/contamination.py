"""Additive (AO) and replacement (RO) outlier mechanisms for observed series.

Each index ``i = 0..n`` independently gets an indicator ``R_i ~ Bernoulli(eps)``
and a draw ``Z_i ~ N(0, sigma_z2)``. AO observes ``X_i + R_i Z_i``; RO observes
``(1 - R_i) X_i + R_i Z_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sde import SamplePath, make_rng

KINDS = ("none", "ao", "ro")


@dataclass(frozen=True)
class ContaminationSpec:
    kind: str = "none"
    epsilon: float = 0.05
    sigma_z2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind != "none":
            if not 0.0 <= self.epsilon <= 1.0:
                raise ValueError("epsilon must lie in [0, 1]")
            if not self.sigma_z2 >= 0.0:
                raise ValueError("sigma_z2 must be >= 0")


def draw_outliers(size: int, spec: ContaminationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return the indicator and outlier arrays ``(R, Z)`` for ``size`` indices."""
    rng = make_rng(spec.seed)
    r = rng.random(size) < spec.epsilon
    z = math.sqrt(spec.sigma_z2) * rng.standard_normal(size)
    return r, z


def contaminate(path: SamplePath, spec: ContaminationSpec) -> SamplePath:
    if spec.kind == "none":
        return path.with_values(path.values, seed=spec.seed)
    r, z = draw_outliers(path.n + 1, spec)
    x = path.values
    if spec.kind == "ao":
        y = np.where(r, x + z, x)
    else:
        y = np.where(r, z, x)
    return path.with_values(y, seed=spec.seed)
