"""Deterministic seeded random-number streams for reproducible sampling.

Every sampler in the package derives its generators from an explicit
``(seed, batch_index)`` pair, so results are identical for a fixed seed and
batch count no matter how the batches are scheduled.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np


def derived_rng(seed: int, batch_index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(batch_index))))


def batch_rngs(seed: int, batches: int) -> Iterator[np.random.Generator]:
    for b in range(batches):
        yield derived_rng(seed, b)


def batch_sizes(total: int, batches: int) -> list[int]:
    return [total // batches + (1 if b < total % batches else 0) for b in range(batches)]
