"""Named random streams derived from a master seed.

Every stream is a ``numpy.random.Generator`` backed by PCG64 and keyed by a
``SeedSequence`` spawn key, so drawing from one stream never shifts another.
"""
from __future__ import annotations

import numpy as np
import torch

# Stream purposes; the integer values are part of the reproducibility contract.
ITERATION = 0
GOALSPACE_INIT = 1
TRAINING = 2
DATASET = 3
EVALUATION = 4
GALLERY = 5


def stream(seed: int, purpose: int, *index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(purpose, *index))
    return np.random.Generator(np.random.PCG64(ss))


def torch_generator(rng: np.random.Generator) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(rng.integers(0, 2**63 - 1)))
    return g
