"""Counter-based random streams.

Every replicate gets its own Philox stream keyed by (master seed, replicate
index), so results are independent of how replicates are batched or spread
across workers.  Streams are consumed strictly sequentially within a
replicate; nothing here depends on global RNG state.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def replicate_key(master_seed: int, replicate: int) -> np.ndarray:
    """128-bit Philox key for one replicate: (master seed, replicate index)."""
    if master_seed < 0 or replicate < 0:
        raise ValueError("seed and replicate index must be nonnegative")
    return np.array([master_seed & _MASK64, replicate & _MASK64], dtype=np.uint64)


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    """Sequential generator for one replicate, independent of all others."""
    return np.random.Generator(np.random.Philox(key=replicate_key(master_seed, replicate)))


def substream_rng(master_seed: int, purpose: int) -> np.random.Generator:
    """Named auxiliary stream (bootstrap resampling, holdout shuffles, ...).

    ``purpose`` values are small fixed integers kept disjoint from replicate
    indices by an offset in the upper half of the key space.
    """
    return replicate_rng(master_seed, (1 << 48) + purpose)
