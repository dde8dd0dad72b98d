"""Project-wide random number generation.

Every source of randomness in ktl goes through :func:`make_rng`, a Philox
counter-based 64-bit generator keyed by explicit integer words.  Derived
streams (per run, per grid cell, per trial) append index words instead of
drawing from a shared stream, so results are reproducible regardless of
evaluation order.
"""

import numpy as np


def make_rng(*seed_words: int) -> np.random.Generator:
    """Return a Philox generator keyed by the given integers."""
    if not seed_words:
        raise ValueError("at least one seed word is required")
    seq = np.random.SeedSequence([int(w) & 0xFFFFFFFFFFFFFFFF for w in seed_words])
    return np.random.Generator(np.random.Philox(seq))
