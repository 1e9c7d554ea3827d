"""Deterministic RNG streams keyed by (seed, *path)."""
from __future__ import annotations

import zlib

import numpy as np

# Stream tags keep unrelated consumers of one seed apart.
TAG_SERVER = 1
TAG_POOLED_DATA = 2
TAG_POOLED_NOISE = 3
TAG_REP = 4
TAG_TRUTH = 5
TAG_CALIBRATION = 6
TAG_MISC = 7


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be nonnegative")
    return k


def stream(seed: int, *path) -> np.random.Generator:
    """Independent generator for ``(seed, *path)``; strings are hashed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([_key(seed), *map(_key, path)])))


def child_seed(seed: int, *path) -> int:
    """A 63-bit integer seed derived from ``(seed, *path)``."""
    ss = np.random.SeedSequence([_key(seed), *map(_key, path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1
