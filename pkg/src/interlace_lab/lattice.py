"""Lattice geometry on Z^d and the scaled lattice (1/N)Z^d.

Sites are stored as integer coordinate rows; a ``SiteSet`` keeps them in
lexicographic order and supports vectorized membership lookup.  Quantities
on the scaled lattice are computed in unscaled integer coordinates and the
powers of N are applied explicitly.

Weight convention: every nearest-neighbour edge carries weight 1/(2d) and
every vertex weight is 1, so the walk jumps at rate 1 to a uniform neighbour
and Green function entries are expected visit counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

Site = tuple[int, ...]

VERTEX_WEIGHT = 1.0


def edge_weight(d: int) -> float:
    return 1.0 / (2 * d)


def neighbor_offsets(d: int) -> np.ndarray:
    """The 2d unit vectors +e_i, -e_i as an int64 array of shape (2d, d)."""
    eye = np.eye(d, dtype=np.int64)
    return np.concatenate([eye, -eye])


class SiteSet:
    """Finite set of lattice sites in deterministic lexicographic order."""

    __slots__ = ("coords", "_lo", "_shape", "_keys", "_hash")

    def __init__(self, coords: np.ndarray | Iterable[Sequence[int]], d: int | None = None):
        arr = np.asarray(list(coords) if not isinstance(coords, np.ndarray) else coords)
        if arr.size == 0:
            if d is None:
                raise ValueError("empty SiteSet needs an explicit dimension")
            arr = np.zeros((0, d), dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError("coords must be a 2-d array of shape (n, d)")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == np.round(arr)):
                raise ValueError("site coordinates must be integers")
        arr = arr.astype(np.int64)
        if d is not None and arr.shape[1] != d:
            raise ValueError(f"expected dimension {d}, got {arr.shape[1]}")
        if arr.shape[1] < 3:
            raise ValueError("lattice dimension must be at least 3")
        if len(arr):
            arr = np.unique(arr, axis=0)  # sorted lexicographically
            lo = arr.min(axis=0)
            shape = tuple(int(s) for s in arr.max(axis=0) - lo + 1)
            if math.prod(shape) >= 2**62:
                raise ValueError("site set bounding box too large to index")
            keys = np.ravel_multi_index(tuple((arr - lo).T), shape)
        else:
            lo = np.zeros(arr.shape[1], dtype=np.int64)
            shape = (1,) * arr.shape[1]
            keys = np.zeros(0, dtype=np.int64)
        arr.setflags(write=False)
        self.coords = arr
        self._lo = lo
        self._shape = shape
        self._keys = keys
        self._hash = None

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[Site]:
        return (tuple(int(c) for c in row) for row in self.coords)

    def __contains__(self, site) -> bool:
        return self.index(site) >= 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, SiteSet):
            return NotImplemented
        return self.coords.shape == other.coords.shape and bool(np.all(self.coords == other.coords))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.coords.shape, self.coords.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"SiteSet(n={len(self)}, d={self.d})"

    def index(self, site) -> int:
        """Position of ``site`` in the set, or -1 when absent."""
        return int(self.indices(np.asarray(site, dtype=np.int64).reshape(1, -1))[0])

    def indices(self, points: np.ndarray) -> np.ndarray:
        """Vectorized position lookup; rows not in the set map to -1."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        out = np.full(len(pts), -1, dtype=np.int64)
        if len(self) == 0 or len(pts) == 0:
            return out
        rel = pts - self._lo
        inside = np.all((rel >= 0) & (rel < np.asarray(self._shape)), axis=1)
        if not inside.any():
            return out
        keys = np.ravel_multi_index(tuple(rel[inside].T), self._shape)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        hit = self._keys[pos] == keys
        sub = np.full(len(keys), -1, dtype=np.int64)
        sub[hit] = pos[hit]
        out[inside] = sub
        return out

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        return self.indices(points) >= 0

    def union(self, other: "SiteSet") -> "SiteSet":
        return SiteSet(np.concatenate([self.coords, other.coords]), d=self.d)

    def issubset(self, other: "SiteSet") -> bool:
        return bool(np.all(other.indices(self.coords) >= 0))

    def center(self) -> np.ndarray:
        """Integer site nearest to the midpoint of the bounding box."""
        lo = self.coords.min(axis=0)
        hi = self.coords.max(axis=0)
        return np.floor((lo + hi) / 2 + 0.5).astype(np.int64)

    def circumradius(self, center: np.ndarray | None = None) -> float:
        c = self.center() if center is None else center
        return float(np.sqrt(((self.coords - c) ** 2).sum(axis=1)).max())

    def neighbor_table(self) -> np.ndarray:
        """(n, 2d) array of neighbour positions, -1 where the neighbour is outside."""
        offs = neighbor_offsets(self.d)
        nb = self.coords[:, None, :] + offs[None, :, :]
        return self.indices(nb.reshape(-1, self.d)).reshape(len(self), 2 * self.d)

    def inner_boundary(self) -> "SiteSet":
        """Members with at least one neighbour outside the set."""
        mask = (self.neighbor_table() < 0).any(axis=1)
        return SiteSet(self.coords[mask], d=self.d)

    def outer_boundary(self) -> "SiteSet":
        """Non-members adjacent to the set."""
        offs = neighbor_offsets(self.d)
        nb = (self.coords[:, None, :] + offs[None, :, :]).reshape(-1, self.d)
        nb = nb[self.indices(nb) < 0]
        return SiteSet(nb, d=self.d)


@dataclass(frozen=True)
class Box:
    """Closed box prod_i [lo_i, hi_i] in continuum coordinates."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, d: int = 3) -> "Box":
        return cls((lo,) * d, (hi,) * d)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))

    def contains(self, points: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= np.asarray(self.lo) - slack) & (p <= np.asarray(self.hi) + slack), axis=1)

    def distance_to_boundary_gap(self, inner: "Box") -> float:
        """Smallest distance between the faces of ``inner`` and of this box."""
        gaps = [a_in - a for a, a_in in zip(self.lo, inner.lo)]
        gaps += [b - b_in for b, b_in in zip(self.hi, inner.hi)]
        return min(gaps)


@dataclass(frozen=True)
class LatticeField:
    """Real values on a SiteSet; implicitly zero off the domain."""

    domain: SiteSet
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(vals) != len(self.domain):
            raise ValueError("field length does not match its domain")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, domain: SiteSet, value: float) -> "LatticeField":
        return cls(domain, np.full(len(domain), float(value)))

    @classmethod
    def indicator(cls, domain: SiteSet, subset: SiteSet | None = None) -> "LatticeField":
        if subset is None:
            return cls.constant(domain, 1.0)
        return cls(domain, subset.contains_many(domain.coords).astype(float))

    def at(self, points: np.ndarray) -> np.ndarray:
        """Field values at arbitrary sites (zero outside the domain)."""
        idx = self.domain.indices(points)
        out = np.zeros(len(idx))
        out[idx >= 0] = self.values[idx[idx >= 0]]
        return out

    def on(self, domain: SiteSet) -> "LatticeField":
        return LatticeField(domain, self.at(domain.coords))

    def support(self) -> SiteSet:
        return SiteSet(self.domain.coords[self.values != 0], d=self.domain.d)

    def __add__(self, other: "LatticeField") -> "LatticeField":
        dom = self.domain if self.domain == other.domain else self.domain.union(other.domain)
        return LatticeField(dom, self.at(dom.coords) + other.at(dom.coords))

    def __sub__(self, other: "LatticeField") -> "LatticeField":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "LatticeField":
        return LatticeField(self.domain, c * self.values)


def build_window(box: Box, N: int) -> SiteSet:
    """Integer sites x with x/N in ``box``, i.e. (N B) ∩ Z^d."""
    if N < 1 or int(N) != N:
        raise ValueError("N must be a positive integer")
    if box.d < 3:
        raise ValueError("lattice dimension must be at least 3")
    axes = []
    for a, b in zip(box.lo, box.hi):
        lo = math.ceil(N * a - 1e-9 * max(1.0, abs(N * a)))
        hi = math.floor(N * b + 1e-9 * max(1.0, abs(N * b)))
        axes.append(np.arange(lo, hi + 1, dtype=np.int64))
    if any(len(ax) == 0 for ax in axes):
        return SiteSet(np.zeros((0, box.d), dtype=np.int64), d=box.d)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.d)
    return SiteSet(grid, d=box.d)


def ball_sites(center: Sequence[int], radius: float, d: int | None = None) -> SiteSet:
    """Sites within Euclidean distance ``radius`` of an integer center."""
    c = np.asarray(center, dtype=np.int64)
    d = len(c) if d is None else d
    r = int(math.floor(radius))
    ax = np.arange(-r, r + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[(grid**2).sum(axis=1) <= radius**2 + 1e-9]
    return SiteSet(grid + c, d=d)


def dirichlet_energy_N(phi: LatticeField, N: int) -> float:
    """Scaled Dirichlet energy (1 / (2 N^{d-2})) * sum over unordered edges of squared increments.

    ``phi`` is taken to vanish off its domain, so edges leaving the domain
    contribute the squared boundary value.
    """
    dom = phi.domain
    if len(dom) == 0:
        return 0.0
    d = dom.d
    vals = phi.values
    nb = dom.neighbor_table()
    total = 0.0
    for i in range(d):
        up = nb[:, i]
        down = nb[:, d + i]
        v_up = np.where(up >= 0, vals[np.maximum(up, 0)], 0.0)
        total += float(np.sum((v_up - vals) ** 2))
        # edges (x - e_i, x) whose lower end lies off the domain
        total += float(np.sum(vals[down < 0] ** 2))
    return total / (2.0 * N ** (d - 2))


def inner_product_N(f: LatticeField, h: LatticeField, N: int) -> float:
    """<f, h> on L_N: (1/N^d) * sum_y f(y) h(y)."""
    d = f.domain.d
    idx = h.domain.indices(f.domain.coords)
    m = idx >= 0
    return float(np.dot(f.values[m], h.values[idx[m]])) / N**d


def graph_laplacian(domain: SiteSet) -> sp.csr_matrix:
    """Matrix D with phi^T D phi = sum over edges touching ``domain`` of squared increments.

    Values outside the domain are fixed at zero, so D = 2d I - (adjacency inside).
    The walk generator in the fixed weight convention is -D / (2d).
    """
    n = len(domain)
    d = domain.d
    nb = domain.neighbor_table()
    rows = np.repeat(np.arange(n), 2 * d)
    cols = nb.reshape(-1)
    keep = cols >= 0
    adj = sp.csr_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(n, n))
    return (sp.identity(n, format="csr") * (2.0 * d) - adj).tocsr()
