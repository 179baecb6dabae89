"""Counter-based random streams.

Every stream is a numpy ``Generator`` over the Philox bit generator, seeded from a
``SeedSequence`` whose entropy is the run seed and whose spawn key is an integer
tuple naming the consumer, e.g. ``(scheme, chunk)`` or ``(iteration, pixel_row)``.
Two streams with the same key are identical; different keys are independent.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .errors import ParameterError


def substream(seed: int, *key: int) -> Generator:
    """Return the stream for ``key`` under ``seed``."""

    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")
    if any(k < 0 for k in key):
        raise ParameterError(f"stream keys must be non-negative, got {key}")
    seq = SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return Generator(Philox(seq))


def substreams(seed: int, prefix: Sequence[int], count: int) -> list[Generator]:
    """``count`` streams keyed ``(*prefix, 0) .. (*prefix, count - 1)``."""

    return [substream(seed, *prefix, i) for i in range(count)]


def uniform_block(rng: Generator, *shape: int) -> np.ndarray:
    return rng.random(shape)
