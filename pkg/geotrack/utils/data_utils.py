"""Batching, seeding and timing helpers."""

import time
from typing import List, Optional

import numpy as np


def stopwatch_now() -> float:
    """Get a time value for interval comparisons.

    When possible it is a monotonic clock to prevent backwards time issues.
    """
    return time.monotonic()


def make_rng(seed: Optional[int], *stream: int) -> np.random.Generator:
    """Independent generator per (seed, stream...) so sub-tasks do not share state."""
    return np.random.default_rng([0 if seed is None else int(seed), *stream])


def shuffled_batches(
    count: int, batch_size: int, rng: np.random.Generator, drop_last: bool = True
) -> List[np.ndarray]:
    """Index batches of one shuffled epoch."""
    order = rng.permutation(count)
    batches = [order[i : i + batch_size] for i in range(0, count, batch_size)]
    if drop_last and batches and len(batches[-1]) < batch_size and len(batches) > 1:
        batches = batches[:-1]
    return batches
