"""Green matrices, equilibrium measures, capacities and hitting distributions.

For a nearest-neighbour walk a set K can only be entered through its inner
boundary S, so e_K vanishes off S and every hitting quantity for K equals the
one for S.  All solves therefore run on S:

    G_SS e = 1                        equilibrium measure, cap(K) = sum e
    H(y, .) = G_SS^{-1} g(S, y)       first-entrance distribution from y
    P_y[H_K < inf] = sum_s g(y, s) e(s)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
from scipy import linalg

from ..lattice import SiteSet
from ..linalg import pcg
from .table import GreenFunction, get_green

DENSE_CAP = 8192
NEGATIVE_SLACK = 1e-10
HITTING_SLACK = 1e-9
RCOND_FLOOR = 1e-13


class EquilibriumError(RuntimeError):
    """Numerical breakdown while computing an equilibrium measure."""


class TooLargeError(ValueError):
    """A dense Green matrix was requested for more sites than the cap allows."""


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    domain: SiteSet
    entries: np.ndarray
    quadrature_tol: float


def _pairwise(green: GreenFunction, A: np.ndarray, B: np.ndarray, block: int = 512) -> np.ndarray:
    out = np.empty((len(A), len(B)))
    for i in range(0, len(A), block):
        diff = A[i : i + block, None, :] - B[None, :, :]
        out[i : i + block] = green(diff)
    return out


def green_matrix(K: SiteSet, d: int | None = None, tol: float = 1e-10) -> GreenMatrix:
    """Dense matrix of g(x - y) over K."""
    d = K.d if d is None else d
    if len(K) == 0:
        raise ValueError("Green matrix of an empty set")
    if len(K) > DENSE_CAP:
        raise TooLargeError(f"{len(K)} sites exceed the dense Green matrix cap of {DENSE_CAP}")
    green = get_green(d, tol)
    G = _pairwise(green, K.coords, K.coords)
    G.setflags(write=False)
    return GreenMatrix(K, G, tol)


def green_between(A: SiteSet | np.ndarray, B: SiteSet | np.ndarray, d: int = 3, tol: float = 1e-10) -> np.ndarray:
    a = A.coords if isinstance(A, SiteSet) else np.atleast_2d(A)
    b = B.coords if isinstance(B, SiteSet) else np.atleast_2d(B)
    return _pairwise(get_green(d, tol), a, b)


class _ConvolutionOperator:
    """Matrix-free y = G_SS x via FFT convolution with the Green kernel."""

    def __init__(self, S: SiteSet, green: GreenFunction):
        lo = S.coords.min(axis=0)
        ext = S.coords.max(axis=0) - lo + 1
        radius = int(ext.max()) - 1
        self.shape = tuple(sfft.next_fast_len(int(e) + 2 * radius, real=True) for e in ext)
        kern = green.kernel_block(radius)
        # place g(x) at index x mod shape so that circular = linear convolution on S
        padded = np.zeros(self.shape)
        ax = [np.arange(-radius, radius + 1) % s for s in self.shape]
        padded[np.ix_(*ax)] = kern
        self._kernel_hat = sfft.rfftn(padded)
        self._idx = tuple((S.coords - lo).T)
        self.diag = np.full(len(S), green.value(np.zeros(S.d, dtype=np.int64)))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        grid = np.zeros(self.shape)
        grid[self._idx] = v
        conv = sfft.irfftn(sfft.rfftn(grid) * self._kernel_hat, s=self.shape)
        return conv[self._idx]


@dataclass(frozen=True, eq=False)
class EquilibriumData:
    """Equilibrium measure of K (indexed like ``domain``) and its capacity."""

    domain: SiteSet
    e: np.ndarray
    capacity: float
    support: SiteSet
    green: GreenMatrix | None
    d: int
    tol: float
    _solve: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _support_pos: np.ndarray = field(repr=False)

    @property
    def e_support(self) -> np.ndarray:
        return self.e[self._support_pos]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply G_SS^{-1} (columns of ``rhs`` indexed like ``support``)."""
        return self._solve(rhs)

    def potential(self, points: np.ndarray) -> np.ndarray:
        """Equilibrium potential h(y) = P_y[hit K] = sum_s g(y, s) e(s)."""
        pts = np.atleast_2d(points)
        vals = green_between(pts, self.support, self.d, self.tol) @ self.e_support
        inside = self.domain.contains_many(pts)
        vals[inside] = 1.0
        return vals

    def harmonic_measure(self, points: np.ndarray) -> np.ndarray:
        """Rows H(y, x), x in K: probability of first entering K at x from y.

        Rows for y in K are unit vectors (the walk is already in K).
        """
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), len(self.domain)))
        pos = self.domain.indices(pts)
        inside = pos >= 0
        out[np.nonzero(inside)[0], pos[inside]] = 1.0
        outside = np.nonzero(~inside)[0]
        if len(outside):
            gSy = green_between(self.support, pts[outside], self.d, self.tol)
            out[np.ix_(outside, self._support_pos)] = self.solve(gSy).T
        return out


def equilibrium(K: SiteSet, d: int | None = None, tol: float = 1e-10, method: str = "auto") -> EquilibriumData:
    """Equilibrium measure and capacity of a finite set K.

    ``method`` is "dense" (Cholesky of G_SS, at most DENSE_CAP boundary sites),
    "fft" (matrix-free CG with FFT convolution) or "auto".
    """
    d = K.d if d is None else d
    if len(K) == 0:
        raise ValueError("equilibrium of an empty set")
    S = K.inner_boundary()
    if method == "auto":
        method = "dense" if len(S) <= DENSE_CAP else "fft"
    green = get_green(d, tol)
    ones = np.ones(len(S))
    gm = None
    if method == "dense":
        gm = green_matrix(S, d, tol)
        try:
            factor = linalg.cho_factor(gm.entries, lower=False, check_finite=False)
        except linalg.LinAlgError as exc:
            raise EquilibriumError(f"Green matrix of {len(S)} sites is not positive definite") from exc
        anorm = float(np.abs(gm.entries).sum(axis=0).max())
        rcond, info = linalg.lapack.dpocon(factor[0], anorm)
        if info != 0 or rcond < RCOND_FLOOR:
            raise EquilibriumError(f"Green matrix ill-conditioned (reciprocal condition {rcond:.3e})")

        def solve(rhs: np.ndarray) -> np.ndarray:
            return linalg.cho_solve(factor, rhs, check_finite=False)

    elif method == "fft":
        op = _ConvolutionOperator(S, green)

        def solve(rhs: np.ndarray) -> np.ndarray:
            rhs = np.asarray(rhs, dtype=float)
            cols = rhs.reshape(len(S), -1)
            out = np.empty_like(cols)
            for j in range(cols.shape[1]):
                res = pcg(op, cols[:, j], diag=op.diag, rtol=1e-12)
                if res.negative_curvature:
                    raise EquilibriumError("Green operator lost positive definiteness in CG")
                out[:, j] = res.x
            return out.reshape(rhs.shape)

    else:
        raise ValueError(f"unknown method {method!r}")

    e_S = solve(ones)
    if np.any(e_S < -NEGATIVE_SLACK):
        raise EquilibriumError(f"equilibrium measure has negative mass {e_S.min():.3e}")
    e_S = np.maximum(e_S, 0.0)
    support_pos = K.indices(S.coords)
    e = np.zeros(len(K))
    e[support_pos] = e_S
    e.setflags(write=False)
    return EquilibriumData(K, e, float(e_S.sum()), S, gm, d, tol, solve, support_pos)


def capacity(K: SiteSet, d: int | None = None, tol: float = 1e-10) -> float:
    return equilibrium(K, d, tol).capacity


def hitting_probability(y, eq: EquilibriumData) -> tuple[float, np.ndarray]:
    """Probability that the walk from y ever visits K, and where it first enters.

    Returns ``(p, entry)`` with ``entry`` a probability vector over
    ``eq.domain``.  For y in K, p = 1 and entry is the unit mass at y.
    """
    pt = np.asarray(y, dtype=np.int64).reshape(1, -1)
    row = eq.harmonic_measure(pt)[0]
    p = float(row.sum())
    if p > 1.0 + HITTING_SLACK:
        raise EquilibriumError(f"hitting probability {p:.12f} exceeds 1")
    if np.any(row < -HITTING_SLACK):
        raise EquilibriumError("negative first-entrance probability")
    row = np.maximum(row, 0.0)
    if p <= 0.0:
        return 0.0, row
    return min(p, 1.0), row / row.sum()
