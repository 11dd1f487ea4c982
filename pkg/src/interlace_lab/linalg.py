"""Preconditioned conjugate gradients that reports loss of positive definiteness."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import eigsh


class SolverError(RuntimeError):
    """The iteration did not reach the requested residual."""


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float              # ||b - A x|| / ||b||
    negative_curvature: bool     # found p with p^T A p <= 0
    direction: np.ndarray | None = None


def pcg(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    diag: np.ndarray | None = None,
    rtol: float = 1e-10,
    maxiter: int | None = None,
    x0: np.ndarray | None = None,
) -> CGResult:
    """Jacobi-preconditioned CG for A x = b with A symmetric.

    Stops early, without raising, when a search direction of non-positive
    curvature shows A is not positive definite.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, False)
    inv_diag = None
    if diag is not None:
        if np.any(diag <= 0):
            # a non-positive diagonal entry already certifies indefiniteness
            k = int(np.argmin(diag))
            e = np.zeros(n)
            e[k] = 1.0
            return CGResult(x, 0, 1.0, True, e)
        inv_diag = 1.0 / diag
    r = b - matvec(x) if x0 is not None else b.copy()
    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        Ap = matvec(p)
        curv = float(p @ Ap)
        if curv <= 0.0:
            return CGResult(x, it, float(np.linalg.norm(r)) / bnorm, True, p)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / bnorm
        if res < rtol:
            return CGResult(x, it, res, False)
        z = r * inv_diag if inv_diag is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})")


def smallest_eigenvalue(A, lower_bound: float) -> float:
    """Smallest eigenvalue of a sparse symmetric matrix by shift-invert Lanczos.

    ``lower_bound`` must lie strictly below the spectrum; the shift sits there
    so the wanted eigenvalue is the one of largest magnitude after inversion.
    """
    if A.shape[0] == 1:
        return float(A[0, 0])
    val = eigsh(A.tocsc(), k=1, sigma=lower_bound, which="LM", return_eigenvectors=False)
    return float(val[0])
