"""Seed derivation.

Every task owns a stream derived from ``(base_seed, *keys)`` so results do
not depend on the order or the process in which tasks run.
"""

from __future__ import annotations

import numpy as np


def derive_seed(base_seed: int, *keys: int) -> np.random.SeedSequence:
    # the key count keeps (s, 0) and (s, 0, 0) apart; entropy words ignore trailing zeros
    return np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, len(keys), *map(int, keys)])


def stream(base_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for task ``keys`` under ``base_seed``."""
    return np.random.default_rng(derive_seed(base_seed, *keys))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
