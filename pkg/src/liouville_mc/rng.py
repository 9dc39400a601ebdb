"""Seed derivation.

Every random stream is keyed by ``SeedSequence([seed, component, *index])`` so
that distinct components never share randomness and a given chunk of samples
is reproducible no matter how the work is scheduled.
"""

from __future__ import annotations

import numpy as np

RADIAL = 0
LATERAL = 1
CROSSING = 2
LATTICE = 3
AUXILIARY = 4
PASSAGE = 5


def stream(seed: int, component: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, component, *index)``."""
    key = [int(seed), int(component), *(int(i) for i in index)]
    if any(k < 0 for k in key):
        raise ValueError("seed components must be non-negative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def child_seed(seed: int, *index: int) -> int:
    """Deterministic 63-bit seed derived from a master seed and an index path."""
    ss = np.random.SeedSequence([int(seed), *(int(i) for i in index)])
    return int(ss.generate_state(1, np.uint64)[0]) & ((1 << 63) - 1)
