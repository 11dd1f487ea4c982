"""Interlacement occupation times restricted to a finite window W.

The trajectories that visit W form a Poisson process with intensity
u * cap(W), each entering W at a site drawn from e_W / cap(W).  After entry,
only the sequence of visits to W matters, and it is an exact Markov chain:
from x the walk moves to a uniform neighbour z; if z lies outside W the walk
comes back to W with probability P_z[hit W], first re-entering at a site
drawn from the harmonic measure H(z, .), and otherwise never returns.  This
is the strong Markov property at the exit time, so no escape radius is
needed.  Each visit lasts an independent unit exponential time, so the total
time at x is Gamma(visits to x, 1).

``sample_trajectory`` keeps the explicit walk outside W up to an escape
radius for cross-checking the chain.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..green_gauge.potential import EquilibriumData, equilibrium, hitting_probability
from ..lattice import Box, SiteSet, build_window, neighbor_offsets
from .rng import RngStream

MAX_STEPS = 10_000_000
BLOCK_SAMPLES = 2048
MAX_BLOCK_CELLS = 1 << 23   # samples * window sites held in memory per block


@dataclass(frozen=True)
class Trajectory:
    entry: tuple[int, ...]
    steps: tuple[tuple[int, ...], ...]          # successive visits to the window
    holding_times: tuple[float, ...]
    terminated: bool
    excursion_starts: tuple[int, ...] = (0,)    # indices in ``steps`` where a new visit to the window begins


@dataclass(frozen=True, eq=False)
class OccupationField:
    window: SiteSet
    L: np.ndarray
    u: float
    eta: int

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        if L.shape != (len(self.window),):
            raise ValueError("occupation vector does not match the window")
        if np.any(L < 0):
            raise ValueError("occupation times must be nonnegative")
        L = L.copy()
        L.setflags(write=False)
        object.__setattr__(self, "L", L)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupationField):
            return NotImplemented
        return (
            self.window == other.window
            and self.u == other.u
            and self.eta == other.eta
            and bool(np.array_equal(self.L, other.L))
        )


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    N: int
    points: np.ndarray      # scaled positions x / N, shape (m, d)
    masses: np.ndarray
    box: Box | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.masses) < 0):
            raise ValueError("atom masses must be nonnegative")
        if self.box is not None and len(self.points) and not np.all(self.box.contains(self.points)):
            raise ValueError("atoms outside the declared box")

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def integrate(self, f) -> float:
        """<mu, f> for a function f of scaled positions (vectorized)."""
        return float(np.dot(self.masses, f(self.points)))

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        if self.N != other.N:
            raise ValueError("cannot add profiles at different scales")
        return AtomicMeasure(
            self.N,
            np.concatenate([self.points, other.points]),
            np.concatenate([self.masses, other.masses]),
            self.box if self.box == other.box else None,
        )


def profile(occ: OccupationField, N: int, box: Box) -> AtomicMeasure:
    """rho_{N,u}: an atom at x/N of mass L_x / N^d for each window site x."""
    if occ.window != build_window(box, N):
        raise ValueError("occupation window is not the lattice window of the box at this scale")
    d = occ.window.d
    return AtomicMeasure(N, occ.window.coords / N, occ.L / N**d, box)


@dataclass
class OccupationBatch:
    """Visit counts for a batch of independent level-u samples."""

    counts: np.ndarray      # (samples, window sites), int
    eta: np.ndarray         # trajectories per sample
    eta_K: np.ndarray       # trajectories per sample visiting the tracked set (0 if none)

    def occupation(self, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(self.counts.astype(float))


class WindowSampler:
    """Exact sampler of interlacement visits to a fixed window."""

    def __init__(self, window: SiteSet, tol: float = 1e-10, R_escape: float | None = None):
        if len(window) == 0:
            raise ValueError("empty window")
        self.window = window
        self.d = window.d
        self.tol = tol
        self.eq = equilibrium(window, tol=tol)
        self.capacity = self.eq.capacity
        self.entry_p = self.eq.e / self.capacity
        self.R_escape = window.circumradius() + 10 if R_escape is None else float(R_escape)
        n = len(window)
        self.table = window.neighbor_table()
        exits = window.outer_boundary()
        offs = neighbor_offsets(self.d)
        ext = exits.indices((window.coords[:, None, :] + offs[None, :, :]).reshape(-1, self.d))
        self.exit_index = np.where(self.table < 0, ext.reshape(n, 2 * self.d), -1)
        # first-entrance law from every exit site, supported on the inner boundary
        S_pos = window.indices(self.eq.support.coords)
        H = self.eq.harmonic_measure(exits.coords)[:, S_pos]
        H = np.maximum(H, 0.0)
        self.return_p = H.sum(axis=1)
        if np.any(self.return_p > 1.0 + 1e-9):
            raise ValueError("return probability exceeds one")
        cdf = np.cumsum(H, axis=1)
        # row r lives in [r, r + 1); one sorted array serves every row
        self._cdf_flat = (cdf + np.arange(len(exits))[:, None]).reshape(-1)
        self._row_len = len(S_pos)
        self._support_pos = S_pos
        self.exits = exits

    # -- core chain -------------------------------------------------------------------

    def _reenter(self, z: np.ndarray, U: np.ndarray) -> np.ndarray:
        q = z + U
        flat = np.searchsorted(self._cdf_flat, q, side="right")
        col = np.minimum(flat - z * self._row_len, self._row_len - 1)
        return self._support_pos[col]

    def walk(
        self,
        start: np.ndarray,
        rng: np.random.Generator,
        track: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Run walkers from window positions ``start`` until none return.

        Returns, for every visit, the walker id and window position, and per
        walker whether it visited a position flagged in ``track``.
        """
        two_d = 2 * self.d
        pos = np.asarray(start, dtype=np.int64).copy()
        wid = np.arange(len(pos))
        visited = np.zeros(len(pos), dtype=bool)
        ids, sites = [], []
        steps = 0
        budget = MAX_STEPS * max(1, len(pos))
        while len(pos):
            ids.append(wid)
            sites.append(pos)
            if track is not None:
                visited[wid[track[pos]]] = True
            steps += len(pos)
            if steps > budget:
                raise RuntimeError(f"step budget exceeded after {steps} visits")
            dirs = rng.integers(0, two_d, size=len(pos))
            nxt = self.table[pos, dirs]
            out = np.nonzero(nxt < 0)[0]
            if len(out):
                z = self.exit_index[pos[out], dirs[out]]
                U = rng.random(len(out))
                back = U < self.return_p[z]
                nxt[out[back]] = self._reenter(z[back], U[back])
                alive = np.ones(len(pos), dtype=bool)
                alive[out[~back]] = False
                pos, wid = nxt[alive], wid[alive]
            else:
                pos = nxt
        if not ids:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), visited
        return np.concatenate(ids), np.concatenate(sites), visited

    def _counts(self, owner_of_visit: np.ndarray, sites: np.ndarray, n_owners: int) -> np.ndarray:
        n = len(self.window)
        return np.bincount(owner_of_visit * n + sites, minlength=n_owners * n).reshape(n_owners, n)

    def draw_entries(self, k: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(len(self.window), size=k, p=self.entry_p)

    def sample_counts(self, u: float, n_samples: int, rng: np.random.Generator, track: np.ndarray | None = None) -> OccupationBatch:
        if u < 0:
            raise ValueError("level u must be nonnegative")
        eta = rng.poisson(u * self.capacity, size=n_samples) if u > 0 else np.zeros(n_samples, dtype=np.int64)
        owner = np.repeat(np.arange(n_samples), eta)
        start = self.draw_entries(len(owner), rng)
        ids, sites, visited = self.walk(start, rng, track)
        counts = self._counts(owner[ids], sites, n_samples)
        eta_K = np.bincount(owner[visited], minlength=n_samples) if track is not None else np.zeros(n_samples, dtype=np.int64)
        return OccupationBatch(counts, eta.astype(np.int64), eta_K)

    def sample_conditioned(self, k: np.ndarray, rng: np.random.Generator, track: np.ndarray) -> np.ndarray:
        """Visit counts of k[i] trajectories per sample, each conditioned to visit ``track``.

        Conditioning is by rejection: trajectories are drawn from the
        window-entrance law and kept only when they visit a tracked site.
        """
        n_samples = len(k)
        counts = np.zeros((n_samples, len(self.window)), dtype=np.int64)
        need = np.asarray(k, dtype=np.int64).copy()
        while need.sum():
            owner = np.repeat(np.arange(n_samples), need)
            start = self.draw_entries(len(owner), rng)
            ids, sites, visited = self.walk(start, rng, track)
            keep = visited[ids]
            counts += self._counts(owner[ids[keep]], sites[keep], n_samples)
            need -= np.bincount(owner[visited], minlength=n_samples)
        return counts


# -- public sampling operations ----------------------------------------------------------


def sample_trajectory(
    entry,
    window_eq: EquilibriumData,
    rng: RngStream | np.random.Generator,
    R_escape: float | None = None,
    max_steps: int = MAX_STEPS,
) -> Trajectory:
    """Explicit continuous-time walk from ``entry`` with return resampling.

    Outside the ball of radius ``R_escape`` about the window, the walk is
    replaced by one Bernoulli(P[return]) draw; on success it continues from a
    first-entrance site of the window, otherwise it is terminated.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    window = window_eq.domain
    d = window.d
    center = window.center()
    R_escape = window.circumradius() + 10 if R_escape is None else R_escape
    offs = neighbor_offsets(d)
    x = np.asarray(entry, dtype=np.int64)
    if window.index(x) < 0:
        raise ValueError("trajectory must start in the window")
    steps, holds, starts = [], [], [0]
    inside_prev = False
    for _ in range(max_steps):
        if window.index(x) >= 0:
            if not inside_prev and steps:
                starts.append(len(steps))
            steps.append(tuple(int(c) for c in x))
            holds.append(float(gen.exponential()))
            inside_prev = True
        else:
            inside_prev = False
            if np.sqrt(((x - center) ** 2).sum()) > R_escape:
                p, entry_dist = hitting_probability(x, window_eq)
                if gen.random() >= p:
                    return Trajectory(steps[0], tuple(steps), tuple(holds), True, tuple(starts))
                x = window.coords[gen.choice(len(window), p=entry_dist)]
                continue
        x = x + offs[gen.integers(0, 2 * d)]
    raise RuntimeError(f"step budget {max_steps} exceeded; R_escape={R_escape} may be misconfigured")


def _blocks(n_samples: int, n_sites: int) -> list[tuple[int, int]]:
    size = max(1, min(BLOCK_SAMPLES, MAX_BLOCK_CELLS // max(1, n_sites)))
    return [(s, min(s + size, n_samples)) for s in range(0, n_samples, size)]


def map_blocks(fn, n_samples: int, n_sites: int, rng: RngStream, threads: int | None = 1) -> list:
    """Apply ``fn(n, generator)`` to fixed sample blocks, each with its own child stream.

    Blocks depend only on (n_samples, n_sites), so results do not depend on
    the thread count.
    """
    blocks = _blocks(n_samples, n_sites)
    jobs = [(b - a, rng.child(i)) for i, (a, b) in enumerate(blocks)]
    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda job: fn(job[0], job[1].generator()), jobs))
    return [fn(n, s.generator()) for n, s in jobs]


def sample_occupation(
    window: SiteSet | WindowSampler,
    u: float,
    rng: RngStream | np.random.Generator,
) -> OccupationField:
    """One occupation field at level u on the window."""
    sampler = window if isinstance(window, WindowSampler) else WindowSampler(window)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    batch = sampler.sample_counts(u, 1, gen)
    L = batch.occupation(gen)[0]
    return OccupationField(sampler.window, L, float(u), int(batch.eta[0]))


def sample_occupations(
    sampler: WindowSampler,
    u: float,
    n_samples: int,
    rng: RngStream,
    threads: int | None = 1,
) -> Iterable[OccupationField]:
    """Many independent occupation fields, block-seeded for reproducibility."""

    def block(n, gen):
        b = sampler.sample_counts(u, n, gen)
        return b.occupation(gen), b.eta

    for L, eta in map_blocks(block, n_samples, len(sampler.window), rng, threads):
        for i in range(len(eta)):
            yield OccupationField(sampler.window, L[i], float(u), int(eta[i]))


def dump_samples(path, samples: Iterable[OccupationField], seed: int, stream: int) -> None:
    """JSON lines {seed, stream, eta, L: {site: time}} in window order."""
    with open(path, "w") as fh:
        for occ in samples:
            L = {",".join(str(c) for c in site): float(t) for site, t in zip(occ.window, occ.L) if t > 0}
            fh.write(json.dumps({"seed": seed, "stream": stream, "eta": occ.eta, "L": L}) + "\n")
