"""Seeded, splittable random streams.

A stream is identified by (seed, stream, key); the numpy SeedSequence spawn
key makes distinct identifiers statistically independent, and identical
identifiers reproduce identical draws on every platform numpy supports.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SEED = 2**64


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= int(self.seed) < MAX_SEED):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream) < 0:
            raise ValueError("stream id must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),) + tuple(self.key))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, i: int) -> "RngStream":
        """Independent sub-stream, e.g. for the i-th block of a batch."""
        return RngStream(self.seed, self.stream, self.key + (int(i),))
