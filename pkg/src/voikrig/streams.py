"""Purpose-keyed random streams derived from a single user seed.

Every stochastic ingredient of a run (candidate pool, initial training
picks, measurement noise, upgrade areas, ...) draws from its own
counter-based Philox generator. Streams are independent of evaluation
order, so adding a consumer never perturbs the values another consumer
sees for the same seed.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose registry. New purposes append; never renumber.
PURPOSES = {
    "pool": 0,
    "initial_points": 1,
    "measurement_noise": 2,
    "upgrade_area": 3,
    "voi_pool": 4,
    "voi_outcomes": 5,
    "pilot": 6,
    "test": 7,
}


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return the counter-based generator for (seed, purpose, index).

    ``index`` separates repeated uses of one purpose, e.g. successive
    pool enrichments or per-group pools.
    """
    if purpose not in PURPOSES:
        raise ValueError(f"unknown stream purpose: {purpose!r}")
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    key = (int(seed) & (2**64 - 1)) | (PURPOSES[purpose] << 64) | (int(index) << 80)
    return np.random.Generator(np.random.Philox(key=key))
