"""Deterministic evaluation of Gamma_N, the rate function I_N and scaled capacities.

On the scaled lattice (1/N) Z^d with <f, h>_N = N^{-d} sum f h and the
Dirichlet form E_N = d N^{2-d} E (E the unit-lattice form with edge weight
1/(2d)):

    Gamma_N(V) = <V, 1>_N + sup_phi {2 <V, phi>_N + <V phi, phi>_N - E_N(phi, phi)}

has stationarity (d N^2 (I - P) - V) phi = V and value N^{-d} sum V (1 + phi).
The rate function of a density h on the window B_N is
I_N(h) = E_N of the harmonic extension of sqrt(h) - 1 off B_N.

Two routes are offered:

* "truncated": sparse solves on lattice balls of radius R and 2R with zero
  exterior values, combined by Richardson extrapolation in R^{2-d};
* "trace": exact elimination of the exterior through the Green function,
  E_N(extension of psi) = d N^{2-d} psi^T G_BB^{-1} psi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from ..green_gauge.gauge import solve_truncated
from ..green_gauge.potential import DENSE_CAP, equilibrium, green_matrix
from ..lattice import LatticeField, SiteSet, ball_sites, dirichlet_energy_N, graph_laplacian
from ..linalg import pcg, smallest_eigenvalue
from .regions import Region

MIN_RADIUS = 8
METHODS = ("truncated", "trace")


@dataclass(frozen=True, eq=False)
class QuadraticSolveReport:
    """Outcome of one variational solve.

    ``value`` is the best estimate: the Richardson extrapolation of the
    radius-R and radius-2R values for the truncated route, the exact value
    for the trace route.  ``value_R`` and ``refined_value`` keep the raw
    truncated values.
    """

    value: float                     # math.inf for a supercritical verdict
    optimizer: LatticeField | None
    truncation_radius: int | None
    value_R: float
    refined_value: float
    error_estimate: float
    iterations: int
    residual: float
    method: str
    finite: bool = True
    min_eigenvalue: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "value_R": self.value_R,
            "refined_value": self.refined_value,
            "error_estimate": self.error_estimate,
            "truncation_radius": self.truncation_radius,
            "iterations": self.iterations,
            "residual": self.residual,
            "method": self.method,
            "finite": self.finite,
            "min_eigenvalue": self.min_eigenvalue,
        }


@dataclass(frozen=True, eq=False)
class DensityOnWindow:
    """Density h >= 0 of a profile with respect to N^{-d} counting measure on B_N."""

    window: SiteSet
    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if h.shape != (len(self.window),):
            raise ValueError("density does not match the window")
        if not np.all(np.isfinite(h)) or np.any(h < 0):
            raise ValueError("density must be finite and nonnegative")
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def scaled(self, c: float) -> "DensityOnWindow":
        return DensityOnWindow(self.window, c * self.h)


def _richardson(v_R: float, v_2R: float, d: int) -> tuple[float, float]:
    """Extrapolate v(R) = v + C R^{2-d}; return (limit, size of the correction)."""
    r = 2.0 ** (2 - d)
    corr = (v_2R - v_R) * r / (1.0 - r)
    return v_2R + corr, abs(corr)


def _radius(window: SiteSet, R: int | None) -> tuple[np.ndarray, int]:
    c = window.center()
    rw = window.circumradius(c)
    R_min = max(MIN_RADIUS, 2 * math.ceil(rw))
    if R is None:
        return c, R_min + 2
    if R < 2 * rw:
        raise ValueError(f"truncation radius {R} is below twice the window radius {rw:.2f}")
    return c, int(R)


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


# -- Gamma_N ----------------------------------------------------------------------------


def _gamma_truncated_at(V: LatticeField, N: int, center, R: int, tol: float):
    d = V.domain.d
    ball = ball_sites(center, R, d)
    v = V.at(ball.coords)
    sol = solve_truncated(ball, v, kappa=d * N**2, rtol=tol)
    if not sol.positive_definite:
        return math.inf, None, sol
    return float(v @ (1.0 + sol.phi)) / N**d, LatticeField(ball, sol.phi), sol


def gamma_N(V: LatticeField, N: int, R: int | None = None, tol: float = 1e-10, method: str = "truncated") -> QuadraticSolveReport:
    """Gamma_N(V) for V supported on the window V.domain.

    A supercritical V (no finite supremum) yields value = math.inf with
    ``finite`` False and, for the truncated route, the smallest eigenvalue of
    the truncated operator as evidence.
    """
    _check_method(method)
    d = V.domain.d
    if method == "trace":
        return _gamma_trace(V, N, tol)
    center, R = _radius(V.domain, R)
    val_R, _, sol_R = _gamma_truncated_at(V, N, center, R, tol)
    val_2R, phi, sol_2R = _gamma_truncated_at(V, N, center, 2 * R, tol)
    iters = sol_R.iterations + sol_2R.iterations
    if math.isinf(val_R) and math.isinf(val_2R):
        return QuadraticSolveReport(
            math.inf, None, R, val_R, val_2R, 0.0, iters, math.nan, method, False,
            min(sol_R.min_eigenvalue, sol_2R.min_eigenvalue),
        )
    if math.isinf(val_2R):
        # positive definite on the smaller ball only; the larger domain is the stronger evidence
        return QuadraticSolveReport(
            math.inf, None, R, val_R, val_2R, math.inf, iters, math.nan, method, False,
            sol_2R.min_eigenvalue, {"caveat": "supercritical at 2R only"},
        )
    value, err = _richardson(val_R, val_2R, d)
    return QuadraticSolveReport(value, phi, R, val_R, val_2R, err, iters, sol_2R.residual, method)


def _gamma_trace(V: LatticeField, N: int, tol: float) -> QuadraticSolveReport:
    d = V.domain.d
    B = V.domain
    G = green_matrix(B, d, tol).entries
    v = V.values
    k = d * N**2
    # d N^2 G^{-1} - V is positive definite iff its congruence d N^2 G - G V G is
    congruent = k * G - (G * v[None, :]) @ G
    try:
        linalg.cholesky(congruent, lower=True, check_finite=False)
    except linalg.LinAlgError:
        lam_min = float(linalg.eigvalsh(k * linalg.inv(G) - np.diag(v), subset_by_index=[0, 0])[0])
        return QuadraticSolveReport(math.inf, None, None, math.inf, math.inf, 0.0, 0, math.nan, "trace", False, lam_min)
    # (d N^2 I - G V) phi = G V
    M = k * np.eye(len(v)) - G * v[None, :]
    phi = linalg.solve(M, G @ v)
    residual = float(np.linalg.norm(M @ phi - G @ v) / max(np.linalg.norm(G @ v), 1e-300))
    value = float(v @ (1.0 + phi)) / N**d
    return QuadraticSolveReport(value, LatticeField(B, phi), None, value, value, 0.0, 1, residual, "trace")


# -- rate function I_N ------------------------------------------------------------------


def _extension_truncated(psi: LatticeField, N: int, center, R: int, tol: float):
    """Harmonic extension of psi off its domain inside the ball of radius R, zero beyond."""
    d = psi.domain.d
    ball = ball_sites(center, R, d).union(psi.domain)
    inB = psi.domain.contains_many(ball.coords)
    ext = np.nonzero(~inB)[0]
    D = graph_laplacian(ball)
    D_EE = D[ext][:, ext].tocsr()
    rhs = -(D[ext][:, np.nonzero(inB)[0]] @ psi.at(ball.coords[inB]))
    full = psi.at(ball.coords)
    res = pcg(D_EE.__matmul__, rhs, diag=D_EE.diagonal(), rtol=tol)
    if res.negative_curvature:
        raise RuntimeError("exterior Laplacian lost positive definiteness")
    full[ext] = res.x
    field_ = LatticeField(ball, full)
    return dirichlet_energy_N(field_, N), field_, res


def rate_I_N(density: DensityOnWindow, N: int, R: int | None = None, tol: float = 1e-10, method: str = "truncated") -> QuadraticSolveReport:
    """I_N(h) = E_N(phi) where phi = sqrt(h) - 1 on B_N and is harmonic outside."""
    _check_method(method)
    B = density.window
    d = B.d
    psi = LatticeField(B, np.sqrt(density.h) - 1.0)
    if method == "trace":
        G = green_matrix(B, d, tol).entries
        factor = linalg.cho_factor(G, lower=False, check_finite=False)
        x = linalg.cho_solve(factor, psi.values, check_finite=False)
        value = d * N ** (2 - d) * float(psi.values @ x)
        residual = float(np.linalg.norm(G @ x - psi.values) / max(np.linalg.norm(psi.values), 1e-300))
        return QuadraticSolveReport(value, psi, None, value, value, 0.0, 1, residual, "trace")
    center, R = _radius(B, R)
    if not np.any(psi.values):
        zero = LatticeField.constant(B, 0.0)
        return QuadraticSolveReport(0.0, zero, R, 0.0, 0.0, 0.0, 0, 0.0, method)
    v_R, _, res_R = _extension_truncated(psi, N, center, R, tol)
    v_2R, ext, res_2R = _extension_truncated(psi, N, center, 2 * R, tol)
    value, err = _richardson(v_R, v_2R, d)
    return QuadraticSolveReport(value, ext, R, v_R, v_2R, err, res_R.iterations + res_2R.iterations, res_2R.residual, method)


def duality_matched_potential(density: DensityOnWindow, N: int, tol: float = 1e-10) -> LatticeField:
    """The V attaining sup_V {<V, h>_N - Gamma_N(V)} for a positive density h.

    At the optimum the Gamma_N maximizer is psi = sqrt(h) - 1, so the
    stationarity condition d N^2 G^{-1} psi = V (1 + psi) determines V.
    """
    if np.any(density.h <= 0):
        raise ValueError("the matched potential needs a strictly positive density")
    B = density.window
    d = B.d
    G = green_matrix(B, d, tol).entries
    root = np.sqrt(density.h)
    Ginv_psi = linalg.cho_solve(linalg.cho_factor(G, check_finite=False), root - 1.0, check_finite=False)
    return LatticeField(B, d * N**2 * Ginv_psi / root)


# -- capacities and continuum approximations -----------------------------------------------


def capacity_scaled(region: Region, N: int, tol: float = 1e-10) -> float:
    """d cap((N K) ∩ Z^d) / N^{d-2}, the lattice approximation of the Brownian capacity of K."""
    K = region.raster(N)
    if len(K) == 0:
        raise ValueError(f"region has no lattice sites at scale N={N}")
    d = K.d
    return d * equilibrium(K, d, tol).capacity / N ** (d - 2)


def rate_I_v(density: DensityOnWindow, v: float, N: int, R: int | None = None, tol: float = 1e-10, method: str = "truncated") -> float:
    """v * I_N(h / v): lattice approximation of the level-v rate function at density h."""
    if v <= 0:
        raise ValueError("level v must be positive")
    return v * rate_I_N(density.scaled(1.0 / v), N, R, tol, method).value


@dataclass(frozen=True)
class RefinementReport:
    N: int
    value_N: float
    value_2N: float
    extrapolated: float        # assumes an O(1/N) leading error
    relative_change: float


def refine(fn, N: int) -> RefinementReport:
    """Evaluate ``fn(N)`` and ``fn(2N)`` and extrapolate; no rigorous error bar is implied."""
    a, b = fn(N), fn(2 * N)
    rel = abs(b - a) / abs(b) if b != 0 else abs(b - a)
    return RefinementReport(N, a, b, 2 * b - a, rel)
