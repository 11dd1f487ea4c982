"""Insulation rate bounds and entropy comparisons."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..lattice import Box
from ..variational.regions import Region
from ..variational.solvers import capacity_scaled


@dataclass(frozen=True)
class DisconnectionSetup:
    """Obstacle K inside B_0 inside B, mollifier radius delta, levels a and u."""

    K: Region
    B0: Box
    B: Box
    delta: float
    a: float
    u: float

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        if not self.delta > 0:
            out.append("delta must be positive")
        if not self.a > 0 or not self.u > 0:
            out.append("a and u must be positive")
        lo, hi = self.K.bounds()
        if np.any(lo <= np.asarray(self.B0.lo)) or np.any(hi >= np.asarray(self.B0.hi)):
            out.append("K must lie in the interior of B_0")
        gap = self.B.distance_to_boundary_gap(self.B0)
        if not gap > self.delta:
            out.append(f"distance between the boundaries of B_0 and B ({gap:g}) must exceed delta ({self.delta:g})")
        return out


def insulation_bounds(setup: DisconnectionSetup, N: int, tol: float = 1e-10) -> tuple[float, float]:
    """(lower_rate, upper_rate) with rate r meaning probability about exp(-r N^{d-2}).

    upper_rate uses the capacity of K, lower_rate that of its delta-neighbourhood,
    so lower_rate >= upper_rate.
    """
    if not setup.a > setup.u:
        raise ValueError("insulation bounds need a > u")
    d = setup.B.d
    gap = (math.sqrt(setup.a) - math.sqrt(setup.u)) ** 2
    upper = gap * capacity_scaled(setup.K, N, tol) / d
    lower = gap * capacity_scaled(setup.K.dilate(setup.delta), N, tol) / d
    return lower, upper


def entropy_gap(v: float, u: float) -> tuple[float, float]:
    """(v log(v/u) - v + u, (sqrt v - sqrt u)^2): tilting cost versus large-deviation cost."""
    if not (v > 0 and u > 0):
        raise ValueError("v and u must be positive")
    return v * math.log(v / u) - v + u, (math.sqrt(v) - math.sqrt(u)) ** 2


def relative_entropy_tilted(a: float, eps: float, u: float, cap_obstacle: float) -> float:
    """Relative entropy of the tilted measure: ((a+eps) log((a+eps)/u) - (a+eps) + u) cap."""
    if not u > 0 or a + eps < u:
        raise ValueError("need a + eps >= u > 0")
    v = a + eps
    return (v * math.log(v / u) - v + u) * cap_obstacle
