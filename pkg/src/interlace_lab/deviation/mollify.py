"""Cone mollifier and regularized profiles on a regular grid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.spatial import cKDTree

from ..interlacement.sampler import AtomicMeasure
from ..lattice import Box


@dataclass(frozen=True)
class Mollifier:
    """phi(y) = C (1 - |y| / delta)_+, normalized to a probability density on R^d."""

    delta: float
    d: int = 3

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("mollifier radius must be positive")

    @property
    def constant(self) -> float:
        sphere = 2 * math.pi ** (self.d / 2) / math.gamma(self.d / 2)
        return self.d * (self.d + 1) / (sphere * self.delta**self.d)

    def profile(self, r: np.ndarray) -> np.ndarray:
        return self.constant * np.maximum(1.0 - np.asarray(r) / self.delta, 0.0)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.profile(np.linalg.norm(np.atleast_2d(y), axis=1))

    def total_mass(self) -> float:
        """Radial quadrature of the density; equals 1 up to quadrature error."""
        sphere = 2 * math.pi ** (self.d / 2) / math.gamma(self.d / 2)
        val, _ = integrate.quad(lambda r: self.profile(r) * sphere * r ** (self.d - 1), 0.0, self.delta, epsabs=1e-13, epsrel=1e-13)
        return val


@dataclass(frozen=True, eq=False)
class GridField:
    """Values on the regular grid lo + spacing * i, i in prod range(shape)."""

    lo: tuple[float, ...]
    spacing: tuple[float, ...]
    values: np.ndarray

    def __post_init__(self):
        if any(s <= 0 for s in self.spacing):
            raise ValueError("grid spacing must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.lo, self.spacing, self.shape)


def grid_nodes(lo, spacing, shape) -> np.ndarray:
    axes = [l + s * np.arange(n) for l, s, n in zip(lo, spacing, shape)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))


@dataclass(frozen=True)
class Grid:
    """A regular grid covering a box, with nodes on both faces of every axis."""

    box: Box
    target_spacing: float

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(math.ceil((b - a) / self.target_spacing - 1e-9)) + 1 for a, b in zip(self.box.lo, self.box.hi))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.box.lo, self.box.hi, self.shape))

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.box.lo, self.spacing, self.shape)

    def refined(self) -> "Grid":
        return Grid(self.box, self.target_spacing / 2)

    def field(self, values: np.ndarray) -> GridField:
        return GridField(self.box.lo, self.spacing, np.asarray(values).reshape(self.shape))


class MollificationOperator:
    """Sparse matrix M with (M m)_z = sum_y m_y phi(z - y) for fixed atom positions."""

    def __init__(self, points: np.ndarray, grid: Grid, mollifier: Mollifier):
        self.grid = grid
        self.mollifier = mollifier
        self.n_points = len(points)
        nodes = grid.nodes()
        dist = cKDTree(nodes).sparse_distance_matrix(cKDTree(points), mollifier.delta, output_type="coo_matrix")
        w = mollifier.profile(dist.data)
        keep = w > 0
        self.matrix = sp.csr_matrix((w[keep], (dist.row[keep], dist.col[keep])), shape=(len(nodes), len(points)))

    def apply(self, masses: np.ndarray) -> np.ndarray:
        """Grid values for one mass vector, or a (samples, points) stack."""
        m = np.asarray(masses, dtype=float)
        if m.ndim == 1:
            return self.matrix @ m
        return (self.matrix @ m.T).T

    def field(self, masses: np.ndarray) -> GridField:
        return self.grid.field(self.apply(masses))


def mollify(mu: AtomicMeasure, m: Mollifier, grid: Grid) -> GridField:
    """Regularized profile sum_y mass_y phi(z - y) at every grid node z (exact finite sum)."""
    if len(mu.points) == 0:
        return grid.field(np.zeros(int(np.prod(grid.shape))))
    return MollificationOperator(mu.points, grid, m).field(mu.masses)
