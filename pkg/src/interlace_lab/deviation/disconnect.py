"""Grid detection of super-level sets separating a compact set from a box boundary.

A field f disconnects K from the boundary of B_0 at level a when every path
from K to the boundary meets {f >= a}.  On the grid this fails exactly when
some face-connected component of {f < a} contains both a node of K and a
boundary node of B_0.  Components are found with a connected-component
labelling, which is equivalent to a breadth-first search from the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..interlacement.sampler import AtomicMeasure
from ..variational.regions import Region
from .mollify import Grid, GridField, Mollifier, MollificationOperator

MIN_SEPARATION_CELLS = 2


class UnresolvedGeometryError(ValueError):
    """The grid is too coarse to represent K or its separation from the boundary."""


def _masks(shape, nodes: np.ndarray, spacing, K: Region) -> tuple[np.ndarray, np.ndarray]:
    inK = K.contains(nodes).reshape(shape)
    if not inK.any():
        raise UnresolvedGeometryError("no grid node lies in K; refine the grid")
    boundary = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[axis] = 0
        boundary[tuple(idx)] = True
        idx[axis] = -1
        boundary[tuple(idx)] = True
    where = np.argwhere(inK)
    gap = np.minimum(where, np.asarray(shape) - 1 - where).min()
    if gap < MIN_SEPARATION_CELLS:
        raise UnresolvedGeometryError("K comes within two grid cells of the boundary of B_0")
    return inK, boundary


def disconnects(field: GridField, a: float, K: Region, sublevel: bool = False) -> bool:
    """True when no path of grid nodes with f < a joins K to the grid boundary.

    The grid of ``field`` is taken to cover exactly B_0.  With
    ``sublevel=True`` the comparison is flipped: paths must stay in {f > a}.
    """
    values = field.values
    inK, boundary = _masks(values.shape, field.nodes(), field.spacing, K)
    open_set = values > a if sublevel else values < a
    labels, _ = ndimage.label(open_set, structure=ndimage.generate_binary_structure(values.ndim, 1))
    from_K = np.unique(labels[inK & open_set])
    from_boundary = np.unique(labels[boundary & open_set])
    return not np.intersect1d(from_K, from_boundary).size


@dataclass(frozen=True)
class RefinedVerdict:
    verdict: bool
    verdict_half: bool

    @property
    def agree(self) -> bool:
        return self.verdict == self.verdict_half


def disconnects_refined(mu: AtomicMeasure, m: Mollifier, grid: Grid, a: float, K: Region, sublevel: bool = False) -> RefinedVerdict:
    """Verdict at the given spacing and at half the spacing."""
    coarse = MollificationOperator(mu.points, grid, m).field(mu.masses)
    fine = MollificationOperator(mu.points, grid.refined(), m).field(mu.masses)
    return RefinedVerdict(disconnects(coarse, a, K, sublevel), disconnects(fine, a, K, sublevel))
