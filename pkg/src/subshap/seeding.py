"""Deterministic seed derivation.

Every stage and every bootstrap replicate draws its randomness from a
generator derived from one root seed plus a path of string labels, so
parallel and serial execution orders produce identical streams.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK = (1 << 63) - 1


def seed_sequence(root_seed: int, *path: object) -> np.random.SeedSequence:
    """SeedSequence for (root_seed, *path); labels are hashed with crc32."""
    parts = [int(root_seed) & _MASK]
    parts += [zlib.crc32(str(p).encode("utf-8")) for p in path]
    return np.random.SeedSequence(parts)


def derive_rng(root_seed: int, *path: object) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root_seed, *path))


def derive_seed(root_seed: int, *path: object) -> int:
    """A plain integer seed for components that take one."""
    return int(seed_sequence(root_seed, *path).generate_state(1)[0])
