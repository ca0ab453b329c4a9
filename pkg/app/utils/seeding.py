"""
Deterministic seed derivation.

All randomness in a run flows from one base seed; each consumer derives
its own stream from (base seed, purpose, part, fold, ...).
"""

import zlib

import numpy as np


def derive_seed(base_seed: int, *keys: str | int) -> int:
    """Derive a stable 63-bit seed from a base seed and string/int keys."""
    words = [int(base_seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, int):
            words.append(key & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(key.encode("utf-8")))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def make_rng(base_seed: int, *keys: str | int) -> np.random.Generator:
    """Numpy generator seeded by derive_seed."""
    return np.random.default_rng(derive_seed(base_seed, *keys))
