"""Portable seeded random generators.

Every stochastic operation (splits, initial walker balls, path sampling)
draws from a Philox counter-based bit generator so that a given seed
reproduces the same stream on every platform.
"""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a Philox-backed generator for the given u64 seed."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(seed))
