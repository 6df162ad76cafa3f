"""Counter-based random streams.

Every draw is keyed by (seed, stream, counters...), so results do not depend
on the order in which realizations, starts or directions are processed.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    OMEGA = 1
    MULTISTART = 2
    DIRECTIONS = 3
    CHECK_SEEDS = 4
    PERTURBATION = 5


def keyed_generator(seed: int, stream: Stream, *counters: int) -> np.random.Generator:
    """Philox generator for the stream identified by `seed`, `stream` and `counters`."""
    key = (int(stream),) + tuple(int(c) for c in counters)
    sequence = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))


def random_simplex_point(seed: int, stream: Stream, *counters: int, dim: int) -> np.ndarray:
    """Uniform point on the unit simplex (normalized exponential draws)."""
    draws = keyed_generator(seed, stream, *counters).exponential(size=dim)
    return draws / draws.sum()
