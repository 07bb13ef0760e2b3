# -*- coding: utf-8 -*-
#
# Seeded random substreams.
#
# Every stream is a PCG64 generator whose state comes from numpy's SeedSequence
# hash of the entropy pair (seed, stream index). Streams for different indices
# are statistically independent, so chunk c of a Monte Carlo run always sees the
# same numbers no matter which worker runs it or in which order.
#
from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def substream(seed: int, index: int = 0) -> np.random.Generator:
    entropy = [int(seed) & SEED_MASK, int(index)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
