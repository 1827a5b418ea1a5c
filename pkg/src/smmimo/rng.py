"""Deterministic random streams keyed by (master seed, purpose tag, index).

Every Monte-Carlo estimator draws from a Philox generator whose key is
derived from the master seed, a short purpose tag and a shard index. Shard
boundaries are fixed by the caller, never by the worker count, so results
do not depend on how the work is distributed.
"""

import zlib

import numpy as np

__all__ = ["stream", "shard_bounds"]


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def shard_bounds(total: int, shard_size: int):
    """Yield ``(shard_index, start, stop)`` covering ``range(total)``."""
    for i, start in enumerate(range(0, total, shard_size)):
        yield i, start, min(start + shard_size, total)
