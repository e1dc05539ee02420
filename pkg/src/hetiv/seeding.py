"""Counter-based random streams keyed by integer seeds.

A seed is one or two non-negative 64-bit integers and becomes the Philox key
directly, so replication ``r`` of a study seeded with ``s`` draws from the
stream keyed ``(s, r)`` regardless of the order replications run in.
"""

from __future__ import annotations

import numpy as np


def seed_key(seed) -> np.ndarray:
    parts = [int(s) for s in np.atleast_1d(np.asarray(seed, dtype=object))]
    if not 1 <= len(parts) <= 2 or any(s < 0 or s >= 2**64 for s in parts):
        raise ValueError("seed must be one or two non-negative 64-bit integers")
    parts += [0] * (2 - len(parts))
    return np.array(parts, dtype=np.uint64)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed_key(seed)))
