"""Counter-based random streams.

Every draw in the simulator comes from a stream addressed by
``(seed, t, purpose)``, so a value never depends on how many draws happened
before it or on which process computes it.
"""

from __future__ import annotations

import numpy as np

SCHEDULE = 0
NOISE = 1
PROBE = 2
OFFSET = 3


def stream(seed: int, t: int, purpose: int, sub: int = 0) -> np.random.Generator:
    if seed < 0 or t < 0:
        raise ValueError(f"seed and t must be non-negative, got seed={seed}, t={t}")
    # word 0 is left to Philox's own per-draw increment
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, t, purpose, sub]))


def child_seeds(seed: int, count: int) -> list[int]:
    """Independent 63-bit seeds derived from ``seed``."""
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [int(s) >> 1 for s in state]
