"""Lattice Green function of the continuous-time simple random walk on Z^d.

The walk jumps at rate 1 to a uniform neighbour, so each coordinate is an
independent rate-1/d nearest-neighbour walk and

    g(0, x) = int_0^inf prod_j exp(-t/d) I_{x_j}(t/d) dt .

This is the Fourier integral (2 pi)^{-d} int e^{i x.theta} / (1 - phi(theta))
with the time variable restored; it turns the d-dimensional singular
integral into a smooth one-dimensional one.  The integral is split at
t = T_SPLIT: the head is integrated with composite Gauss-Legendre panels in
s = log t, the tail with the large-argument expansion of I_n.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ive

S_MIN = -34.0          # head contribution below exp(S_MIN) is below 1e-14
T_SPLIT = 1.0e8
GL_ORDER = 16
TAIL_TERMS = 7
BASE_PANEL = 1.0       # panel width in log t of the coarsest rule
MAX_HALVINGS = 5
ACHIEVABLE_TOL = 1e-13


class GreenQuadratureError(RuntimeError):
    """Raised when the requested accuracy cannot be certified."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def canonical_offsets(x: np.ndarray) -> np.ndarray:
    """Reduce offsets by the hyperoctahedral symmetry: |x_j| sorted descending."""
    a = np.abs(np.atleast_2d(np.asarray(x, dtype=np.int64)))
    return -np.sort(-a, axis=1)


def _panel_rule(width: float) -> tuple[np.ndarray, np.ndarray]:
    s_max = math.log(T_SPLIT)
    n_panels = int(math.ceil((s_max - S_MIN) / width))
    edges = S_MIN + width * np.arange(n_panels + 1)
    edges[-1] = s_max
    xg, wg = np.polynomial.legendre.leggauss(GL_ORDER)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * xg[None, :]).reshape(-1)
    w = (half[:, None] * wg[None, :]).reshape(-1)
    return s, w


def _head(canon: np.ndarray, d: int, width: float) -> np.ndarray:
    s, w = _panel_rule(width)
    t = np.exp(s)
    nmax = int(canon.max()) if canon.size else 0
    orders = np.arange(nmax + 1)
    # table[n, k] = exp(-t_k/d) I_n(t_k/d)
    table = ive(orders[:, None], (t / d)[None, :])
    integrand = np.ones((len(canon), len(s)))
    for j in range(d):
        integrand *= table[canon[:, j]]
    # row-wise reduction so a value does not depend on which offsets share the batch
    return (integrand * (w * t)).sum(axis=1)


def _tail(canon: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Tail integral over [T_SPLIT, inf) and the size of its last retained term."""
    n2 = 4.0 * canon.astype(float) ** 2
    # a_k(n) for k = 0..TAIL_TERMS, with the alternating sign folded in
    coef = np.ones(canon.shape + (TAIL_TERMS + 1,))
    for k in range(1, TAIL_TERMS + 1):
        coef[..., k] = coef[..., k - 1] * -(n2 - (2 * k - 1) ** 2) / (k * 8.0)
    poly = coef[:, 0, :]
    for j in range(1, d):
        prod = np.zeros_like(poly)
        for k in range(TAIL_TERMS + 1):
            prod[:, k:] += poly[:, k : k + 1] * coef[:, j, : TAIL_TERMS + 1 - k]
        poly = prod
    k = np.arange(TAIL_TERMS + 1)
    # int_T^inf (2 pi t / d)^{-d/2} (t/d)^{-k} dt
    basis = (2 * math.pi / d) ** (-d / 2) * d**k * T_SPLIT ** (1 - d / 2 - k) / (d / 2 + k - 1)
    terms = poly * basis
    return terms.sum(axis=1), np.abs(terms[:, -1])


def green_values(x: np.ndarray, d: int = 3, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Green function values g(0, x) for many offsets.

    Each offset is refined independently (panel width halved until two
    successive rules agree to ``tol``), so a value never depends on which
    other offsets share the batch.

    Returns
    -------
    values, error_estimates : arrays of shape (m,)
    """
    if d < 3:
        raise ValueError("the walk is recurrent for d < 3")
    if tol <= 0:
        raise ValueError("tol must be positive")
    canon = canonical_offsets(x)
    if canon.shape[1] != d:
        raise ValueError(f"offsets have dimension {canon.shape[1]}, expected {d}")
    if tol < ACHIEVABLE_TOL:
        raise GreenQuadratureError(f"tolerance {tol:g} below double-precision floor", ACHIEVABLE_TOL)
    m = len(canon)
    tail, tail_err = _tail(canon, d)
    width = BASE_PANEL
    prev = _head(canon, d, width)
    values = np.empty(m)
    errors = np.full(m, np.inf)
    todo = np.arange(m)
    for _ in range(MAX_HALVINGS):
        width /= 2
        cur = _head(canon[todo], d, width)
        err = np.abs(cur - prev) + tail_err[todo]
        values[todo] = cur + tail[todo]
        errors[todo] = err
        pending = err >= tol
        if not pending.any():
            break
        todo = todo[pending]
        prev = cur[pending]
    if np.any(errors >= tol):
        raise GreenQuadratureError("Green quadrature did not converge", float(errors.max()))
    return values, errors


def green_value(x, d: int = 3, tol: float = 1e-10) -> float:
    """g(0, x): expected time spent at x by the walk started at 0."""
    vals, _ = green_values(np.asarray(x, dtype=np.int64).reshape(1, -1), d=d, tol=tol)
    return float(vals[0])
