"""Deterministic derivation of independent random streams from one master seed.

Streams come from numpy's ``SeedSequence`` (PCG64 underneath), whose output
is specified bit-for-bit across platforms.
"""

from __future__ import annotations

import numpy as np

# stage keys mixed into every derived stream
POOL, FEEDERS, BUDDY, BOUNDS, QR = 1, 2, 3, 4, 5


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1, np.uint64)[0])


def make_rng(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, keys)]))
