"""Monte Carlo estimate of the scaled Laplace functional Lambda_N(V)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..lattice import LatticeField
from .rng import RngStream
from .sampler import WindowSampler, map_blocks

HEAVY_TAIL_SHARE = 0.5


@dataclass(frozen=True)
class LaplaceEstimate:
    estimate: float
    stderr: float
    n_samples: int
    heavy_tail: bool     # top 1% of samples carry more than half the exponential mass


def laplace_exponents(sampler: WindowSampler, V: np.ndarray, scale: float, u: float, n_samples: int, rng: RngStream, threads: int | None = 1) -> np.ndarray:
    """Per-sample exponents scale * sum_x V(x) L_{x,u}."""

    def block(n, gen):
        batch = sampler.sample_counts(u, n, gen)
        return scale * (batch.occupation(gen) @ V)

    return np.concatenate(map_blocks(block, n_samples, len(sampler.window), rng, threads))


def summarize_exponents(X: np.ndarray, prefactor: float) -> LaplaceEstimate:
    """prefactor * log(mean exp X) with its delta-method standard error."""
    if not np.all(np.isfinite(X)):
        raise OverflowError("non-finite exponent; use a smaller potential")
    n = len(X)
    M = float(X.max())
    w = np.exp(X - M)
    mean_w = float(w.mean())
    est = prefactor * (logsumexp(X) - math.log(n))
    se = abs(prefactor) * float(w.std(ddof=1)) / (math.sqrt(n) * mean_w) if n > 1 else math.inf
    top = max(1, math.ceil(n / 100))
    share = float(np.sort(w)[-top:].sum() / w.sum())
    return LaplaceEstimate(float(est), se, n, share > HEAVY_TAIL_SHARE)


def mc_laplace(
    V: LatticeField,
    N: int,
    u: float,
    n_samples: int,
    rng: RngStream,
    threads: int | None = 1,
    sampler: WindowSampler | None = None,
) -> LaplaceEstimate:
    """(d / N^{d-2}) (1/u) log E exp{(N^{d-2}/d) <rho_{N,u}, V>} on the window V.domain.

    With rho_{N,u} = N^{-d} sum_x L_{x,u} delta_{x/N}, the exponent is
    sum_x V(x) L_{x,u} / (d N^2).
    """
    if u <= 0:
        raise ValueError("level u must be positive")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    d = V.domain.d
    if sampler is None:
        sampler = WindowSampler(V.domain)
    elif sampler.window != V.domain:
        raise ValueError("sampler window differs from the potential's domain")
    if not np.any(V.values):
        return LaplaceEstimate(0.0, 0.0, n_samples, False)
    X = laplace_exponents(sampler, V.values, 1.0 / (d * N**2), u, n_samples, rng, threads)
    return summarize_exponents(X, d / N ** (d - 2) / u)
