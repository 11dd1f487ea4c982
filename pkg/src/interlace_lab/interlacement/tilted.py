"""Sampling under the measure tilted to raise occupation on an obstacle.

Trajectories that visit the obstacle K form a Poisson process of intensity
u * cap(K); the tilt exp(lam * eta - u cap(K)(e^lam - 1)) with
lam = log((a + eps)/u) raises that intensity to (a + eps) cap(K) and leaves
the others untouched.  A tilted sample is therefore a level-u sample plus an
independent Poisson((a + eps - u) cap(K)) batch of trajectories drawn from
the level-u law conditioned to visit K.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..green_gauge.potential import equilibrium
from ..lattice import SiteSet
from .rng import RngStream
from .sampler import OccupationField, WindowSampler, map_blocks


@dataclass(frozen=True)
class TiltParameters:
    u: float
    a: float
    eps: float
    cap_obstacle: float

    @property
    def level(self) -> float:
        return self.a + self.eps

    @property
    def lam(self) -> float:
        return math.log(self.level / self.u)

    def log_ratio(self, eta_K: np.ndarray) -> np.ndarray:
        """log dP~/dP at the observed numbers of obstacle-visiting trajectories."""
        return self.lam * np.asarray(eta_K, dtype=float) - self.u * self.cap_obstacle * (math.exp(self.lam) - 1.0)


class TiltedSampler:
    def __init__(self, sampler: WindowSampler, obstacle: SiteSet, u: float, a: float, eps: float):
        if u <= 0:
            raise ValueError("level u must be positive")
        if a + eps < u:
            raise ValueError("tilted level a + eps must be at least u")
        if len(obstacle) == 0 or not obstacle.issubset(sampler.window):
            raise ValueError("obstacle must be a nonempty subset of the window")
        self.sampler = sampler
        self.obstacle = obstacle
        self.track = obstacle.contains_many(sampler.window.coords)
        self.params = TiltParameters(float(u), float(a), float(eps), equilibrium(obstacle, tol=sampler.tol).capacity)

    def sample_block(self, n: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Occupation times, trajectory counts and log ratios for n samples."""
        p = self.params
        base = self.sampler.sample_counts(p.u, n, gen, self.track)
        extra = gen.poisson((p.level - p.u) * p.cap_obstacle, size=n) if p.level > p.u else np.zeros(n, dtype=np.int64)
        counts = base.counts
        if extra.sum():
            counts = counts + self.sampler.sample_conditioned(extra, gen, self.track)
        L = gen.gamma(counts.astype(float))
        return L, base.eta + extra, p.log_ratio(base.eta_K + extra)

    def sample_many(self, n_samples: int, rng: RngStream, threads: int | None = 1):
        parts = map_blocks(self.sample_block, n_samples, len(self.sampler.window), rng, threads)
        L = np.concatenate([q[0] for q in parts])
        eta = np.concatenate([q[1] for q in parts])
        ratio = np.concatenate([q[2] for q in parts])
        return L, eta, ratio


def sample_tilted(
    window: SiteSet | WindowSampler,
    obstacle: SiteSet,
    u: float,
    a: float,
    eps: float,
    rng: RngStream | np.random.Generator,
) -> tuple[OccupationField, float]:
    """One tilted occupation field and its log-likelihood ratio against level u."""
    sampler = window if isinstance(window, WindowSampler) else WindowSampler(window)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    ts = TiltedSampler(sampler, obstacle, u, a, eps)
    L, eta, ratio = ts.sample_block(1, gen)
    return OccupationField(sampler.window, L[0], float(u), int(eta[0])), float(ratio[0])
