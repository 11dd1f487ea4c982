"""Compact regions of R^d and their rasterization onto (1/N) Z^d."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..lattice import Box, SiteSet

_EDGE = 1e-9


class Region:
    """A compact set described by its Euclidean distance function."""

    d: int

    def distance(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.distance(points) <= _EDGE

    def raster(self, N: int) -> SiteSet:
        """Integer sites x with x / N in the region."""
        lo, hi = self.bounds()
        axes = [np.arange(math.floor(N * a) - 1, math.ceil(N * b) + 2, dtype=np.int64) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)
        keep = self.distance(grid / N) <= _EDGE
        return SiteSet(grid[keep], d=self.d)

    def dilate(self, delta: float) -> "Dilation":
        return Dilation(self, float(delta))


@dataclass(frozen=True)
class Ball(Region):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    def distance(self, points):
        r = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=1)
        return np.maximum(r - self.radius, 0.0)

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class BoxRegion(Region):
    box: Box

    @property
    def d(self) -> int:
        return self.box.d

    def distance(self, points):
        p = np.atleast_2d(points)
        gap = np.maximum(np.asarray(self.box.lo) - p, 0.0) + np.maximum(p - np.asarray(self.box.hi), 0.0)
        return np.linalg.norm(gap, axis=1)

    def bounds(self):
        return np.asarray(self.box.lo), np.asarray(self.box.hi)


@dataclass(frozen=True)
class Dilation(Region):
    """Closed delta-neighbourhood of a region."""

    base: Region
    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("dilation radius must be nonnegative")

    @property
    def d(self) -> int:
        return self.base.d

    def distance(self, points):
        return np.maximum(self.base.distance(points) - self.delta, 0.0)

    def bounds(self):
        lo, hi = self.base.bounds()
        return lo - self.delta, hi + self.delta


def region_from_spec(spec: dict) -> Region:
    """Build a region from {"ball": {"center", "radius"}} or {"box": {"lo", "hi"}}, optionally dilated."""
    if "ball" in spec:
        region: Region = Ball(tuple(spec["ball"]["center"]), float(spec["ball"]["radius"]))
    elif "box" in spec:
        region = BoxRegion(Box(tuple(spec["box"]["lo"]), tuple(spec["box"]["hi"])))
    else:
        raise ValueError("region needs a 'ball' or 'box' entry")
    if spec.get("dilate"):
        region = region.dilate(float(spec["dilate"]))
    return region
