"""Deterministic RNG stream derivation.

Every stochastic stage derives its generator from the master seed plus a
fixed stream tag (and per-unit indices such as tree or restart number), so
results never depend on call order or thread scheduling.
"""

import numpy as np

# Stream tags. Values are frozen; changing them changes every seeded result.
TAG_BOOTSTRAP = 1
TAG_FEATURES = 2
TAG_CV_FOLDS = 3
TAG_KMEANS = 4
TAG_SYNTH = 5
TAG_SIZE_STAGE = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for substream `key` of `seed`. Seed must be a non-negative int."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng([int(seed), *[int(k) for k in key]])
