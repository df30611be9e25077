"""
Deterministic fan-out of a single user seed into independent random streams.
Every random decision in the package (parameter initialisation, dropout masks,
shuffling, phantom synthesis) draws from a stream derived here, keyed by the
context it is used in, e.g. (command, epoch, batch, layer).

Date: 2024-03-06
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import zlib

import numpy as np


def _key_to_int(key) -> int:
    """Maps a seed key (int or str) to a non-negative integer accepted by SeedSequence."""

    if isinstance(key, str):
        # crc32 is stable across processes, unlike hash()
        return zlib.crc32(key.encode('utf-8'))

    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)

    raise ValueError("Seed keys must be non-negative integers or strings, got {!r}".format(key))


def derive_seed(seed: int, *keys) -> int:
    """Derives a 32-bit seed from the base seed and an ordered tuple of keys.

    Parameters:
        seed Base seed supplied by the user
        keys Context keys (ints or strings)

    Returns:
        int Derived seed"""

    sequence = np.random.SeedSequence([_key_to_int(seed)] + [_key_to_int(key) for key in keys])

    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Creates a numpy Generator for the derived stream.

    Parameters:
        seed Base seed
        keys Context keys

    Returns:
        np.random.Generator Generator seeded with derive_seed(seed, *keys)"""

    return np.random.default_rng(derive_seed(seed, *keys))
