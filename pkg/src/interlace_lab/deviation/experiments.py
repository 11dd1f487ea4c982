"""Monte Carlo drivers: subadditivity of profile events and disconnection frequencies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..interlacement.rng import RngStream
from ..interlacement.sampler import WindowSampler, map_blocks
from ..interlacement.tilted import TiltedSampler
from ..lattice import Box, build_window
from .disconnect import disconnects
from .mollify import Grid, Mollifier, MollificationOperator
from .rates import DisconnectionSetup


@dataclass(frozen=True)
class Proportion:
    hits: int
    n: int
    lo: float
    hi: float
    one_sided: bool      # zero hits: only the upper bound is informative

    @property
    def p_hat(self) -> float:
        return self.hits / self.n


def wilson_interval(hits: int, n: int, level: float = 0.95) -> Proportion:
    """Wilson score interval; zero hits give the one-sided upper bound 1 - (1 - level)^{1/n}."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if hits == 0:
        return Proportion(0, n, 0.0, 1.0 - (1.0 - level) ** (1.0 / n), True)
    z = norm.ppf(0.5 + level / 2)
    p = hits / n
    denom = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return Proportion(hits, n, max(0.0, mid - half), min(1.0, mid + half), False)


# -- subadditivity --------------------------------------------------------------------


def _test_function(name: str):
    if name == "one":
        return lambda y: np.ones(len(y))
    if name.startswith("coord:"):
        i = int(name.split(":", 1)[1])
        return lambda y: y[:, i]
    raise ValueError(f"unknown test function {name!r}")


def _lebesgue_integral(name: str, box: Box) -> float:
    if name == "one":
        return box.volume
    i = int(name.split(":", 1)[1])
    return box.volume * 0.5 * (box.lo[i] + box.hi[i])


@dataclass(frozen=True)
class ProfileEvent:
    """Profiles rho on B with |<rho, f_l> - <nu, f_l>| < delta for every test function.

    ``center`` selects nu: "mean" is the discrete mean profile N^{-d} sum_{B_N}
    delta_{x/N}; "lebesgue" is Lebesgue measure on B.
    """

    box: Box
    delta: float
    test_functions: tuple[str, ...] = ("one",)
    center: str = "lebesgue"

    def __post_init__(self):
        if self.test_functions[:1] != ("one",):
            raise ValueError("the first test function must be the indicator of B ('one')")
        if self.center not in ("mean", "lebesgue"):
            raise ValueError("center must be 'mean' or 'lebesgue'")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def matrix(self, N: int) -> tuple[np.ndarray, np.ndarray]:
        """(F, target) with F[l, x] = f_l(x/N) on the window and target_l = <nu, f_l>."""
        W = build_window(self.box, N)
        y = W.coords / N
        F = np.stack([_test_function(nm)(y) for nm in self.test_functions])
        if self.center == "mean":
            target = F.sum(axis=1) / N ** W.d
        else:
            target = np.array([_lebesgue_integral(nm, self.box) for nm in self.test_functions])
        return F, target


@dataclass(frozen=True)
class SubadditivityRow:
    t: float
    proportion: Proportion

    @property
    def f_hat(self) -> float:
        p = self.proportion
        return math.inf if p.hits == 0 else -math.log(p.p_hat)

    @property
    def f_lo(self) -> float:
        return -math.log(self.proportion.hi)

    @property
    def f_hi(self) -> float:
        return math.inf if self.proportion.lo == 0 else -math.log(self.proportion.lo)


@dataclass(frozen=True)
class SubadditivityScan:
    N: int
    rows: tuple[SubadditivityRow, ...]
    flags: dict = field(default_factory=dict)   # (t1, t2) -> bool


def subadditivity_scan(
    event: ProfileEvent,
    N: int,
    t_values,
    samples: int,
    rng: RngStream,
    threads: int | None = 1,
    level: float = 0.95,
) -> SubadditivityScan:
    """Estimate f(t) = -log P[(1/t) L_{N,t} in A] and check f(t1 + t2) <= f(t1) + f(t2).

    L_{N,t} = (1/(d N^2)) sum_y L_{Ny, d t N^{2-d}} delta_y restricted to B.
    Intervals are Wilson intervals with a Bonferroni split of ``level`` over
    the t values, so the flags use joint intervals.
    """
    W = build_window(event.box, N)
    d = W.d
    sampler = WindowSampler(W)
    F, target = event.matrix(N)
    ts = [float(t) for t in t_values]
    per_level = 1.0 - (1.0 - level) / len(ts)
    rows = []
    for k, t in enumerate(ts):
        u = d * t * N ** (2 - d)

        def block(n, gen, u=u, t=t):
            L = sampler.sample_counts(u, n, gen).occupation(gen)
            stats = (L @ F.T) / (t * d * N**2)
            return np.all(np.abs(stats - target) < event.delta, axis=1)

        hit = np.concatenate(map_blocks(block, samples, len(W), rng.child(k), threads))
        rows.append(SubadditivityRow(t, wilson_interval(int(hit.sum()), samples, per_level)))
    by_t = {r.t: r for r in rows}
    flags = {}
    for i, t1 in enumerate(ts):
        for t2 in ts[i:]:
            if t1 + t2 in by_t:
                flags[(t1, t2)] = by_t[t1 + t2].f_lo <= by_t[t1].f_hi + by_t[t2].f_hi
    return SubadditivityScan(N, tuple(rows), flags)


# -- disconnection --------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyResult:
    N: int
    proportion: Proportion
    refinement_agreement: float | None     # fraction of samples whose half-spacing verdict agrees
    tilted: bool
    mean_log_ratio: float | None = None

    @property
    def frequency(self) -> float:
        return self.proportion.p_hat


def disconnection_frequency(
    setup: DisconnectionSetup,
    N: int,
    eps: float | None,
    samples: int,
    rng: RngStream,
    threads: int | None = 1,
    spacing: float | None = None,
    refine: bool = False,
) -> FrequencyResult:
    """Fraction of sampled profiles whose mollified version disconnects K from the boundary of B_0.

    ``eps`` None samples at level u; otherwise under the tilt with level
    a + eps on the lattice obstacle (N K^delta) ∩ Z^d.
    """
    W = build_window(setup.B, N)
    d = W.d
    sampler = WindowSampler(W)
    moll = Mollifier(setup.delta, d)
    grid = Grid(setup.B0, setup.delta / 4 if spacing is None else spacing)
    points = W.coords / N
    op = MollificationOperator(points, grid, moll)
    op_fine = MollificationOperator(points, grid.refined(), moll) if refine else None
    tilted = None
    if eps is not None:
        obstacle = setup.K.dilate(setup.delta).raster(N)
        tilted = TiltedSampler(sampler, obstacle, setup.u, setup.a, eps)

    def block(n, gen):
        if tilted is None:
            L = sampler.sample_counts(setup.u, n, gen).occupation(gen)
            ratio = np.zeros(n)
        else:
            L, _, ratio = tilted.sample_block(n, gen)
        masses = L / N**d
        f = op.apply(masses)
        verdict = np.array([disconnects(grid.field(row), setup.a, setup.K) for row in f])
        if op_fine is None:
            return verdict, np.ones(n, dtype=bool), ratio
        g = op_fine.apply(masses)
        fine = np.array([disconnects(grid.refined().field(row), setup.a, setup.K) for row in g])
        return verdict, verdict == fine, ratio

    parts = map_blocks(block, samples, len(W), rng, threads)
    verdict = np.concatenate([p[0] for p in parts])
    agree = np.concatenate([p[1] for p in parts])
    ratio = np.concatenate([p[2] for p in parts])
    return FrequencyResult(
        N,
        wilson_interval(int(verdict.sum()), samples),
        float(agree.mean()) if refine else None,
        tilted is not None,
        float(ratio.mean()) if tilted is not None else None,
    )
