"""Named random sub-streams derived from one run seed."""

import numpy as np

STREAMS = {"init": 0, "sampling": 1, "augment": 2, "toy": 3}


def substream(seed, name, *keys):
    """Independent generator for ``(seed, name, *keys)``; same inputs give the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS[name], *map(int, keys)]))
