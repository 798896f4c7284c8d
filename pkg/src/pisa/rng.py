"""Counter-based, splittable randomness.

Every random stream is derived from one 64-bit master seed plus an integer key
path, so clip ``i`` of a dataset never depends on how many clips came before it.
"""

import numpy as np


def derive_seed(seed: int, *key: int) -> int:
    """A child 64-bit seed for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
