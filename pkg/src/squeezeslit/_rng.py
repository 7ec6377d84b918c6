"""Seeded, named RNG substreams.

Every stochastic component in the package derives its randomness from a
single user-supplied integer seed through named substreams, so that reruns
with the same seed reproduce every artifact bit for bit regardless of how
work is partitioned across workers.  Philox is counter-based: a (seed, label)
pair fully determines the stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator for the named substream of ``seed``."""
    key = zlib.crc32(label.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, label: str) -> int:
    """Derive a deterministic 63-bit child seed for the named substream."""
    key = zlib.crc32(label.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
