"""Deterministic per-component random streams derived from one 64-bit seed.

Each component name (and any integer indices) is hashed with CRC-32 into
the ``spawn_key`` of a :class:`numpy.random.SeedSequence`, so streams are
independent of each other and of the order in which they are requested.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _key(part) -> int:
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed: int, *names) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=tuple(_key(n) for n in names))


def stream(seed: int, *names) -> np.random.Generator:
    """Generator for the component identified by ``names`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def derive_seed(seed: int, *names) -> int:
    """A child 64-bit seed, e.g. one per Monte Carlo run."""
    return int(seed_sequence(seed, *names).generate_state(1, dtype=np.uint64)[0])
