"""Random streams.

Every stochastic routine takes a ``seed`` and derives its generator with
:func:`make_rng`.  Streams are split with ``SeedSequence`` spawn keys:
replicate ``i`` of a run seeded ``s`` uses ``SeedSequence(s, spawn_key=(i,))``,
and sub-streams nest further keys.  The bit generator is PCG64, so the same
seed and key always give the same stream, and distinct keys give streams that
do not overlap in practice.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "replicate_seeds", "MAX_SEED"]

MAX_SEED = 2**64 - 1


def make_rng(seed, *key: int) -> np.random.Generator:
    """Generator for ``seed`` and spawn key ``key``.

    ``seed`` may also be an existing Generator, which is returned unchanged
    when no key is given.
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("cannot derive keyed streams from a Generator")
        return seed
    if seed is None:
        raise ValueError("a seed is required for reproducible streams")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def replicate_seeds(seed: int, n: int) -> list[tuple[int, tuple[int]]]:
    """``(seed, key)`` pairs for ``n`` replicates, in replicate order."""
    return [(int(seed), (i,)) for i in range(n)]
