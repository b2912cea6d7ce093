"""Named random substreams.

Every random draw in a run comes from a generator keyed by (seed, purpose, client, round),
so adding a policy or a client never shifts the numbers another purpose sees.
"""

from __future__ import annotations

import numpy as np

# Purpose codes are part of the replay contract, never renumber them.
PURPOSES = {
    "truth": 1,
    "client-params": 2,
    "features": 3,
    "noise": 4,
    "label-skew": 5,
    "init": 6,
    "select": 7,
    "shuffle": 8,
}

NO_CLIENT = -1
NO_ROUND = -1


def substream(seed: int, purpose: str, client: int = NO_CLIENT, round_index: int = NO_ROUND) -> np.random.Generator:
    if purpose not in PURPOSES:
        raise ValueError(f"Unknown random substream purpose: {purpose}")
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    # client/round are shifted by one so the "not applicable" slot never collides with id 0
    entropy = [int(seed), PURPOSES[purpose], int(client) + 1, int(round_index) + 1]
    return np.random.default_rng(np.random.SeedSequence(entropy))
