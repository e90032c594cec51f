"""pollwatch — seeded random substreams.

Every stochastic step draws from a generator keyed on (seed, stage, unit), so a
region's draws never depend on how many other regions exist or on which worker
runs it.
"""

from __future__ import annotations

import numpy as np

# Stage tags. Values are part of the reproducibility contract: never renumber.
GENERATE = 1
DESIRABILITY = 2
REDISTRIBUTE = 3
MAIL_IN = 4
NETWORK = 5
SCORES = 6
VOTE_NOISE = 7
POLL_SAMPLE = 8
POLL_NOISE = 9
FRAUD_REGIONS = 10
FRAUD = 11
KMEANS = 12
EXPERIMENT = 13
TIES = 14


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, *keys)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 32-bit child seed, for handing a sub-task its own master seed."""
    return int(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]).generate_state(1)[0])
