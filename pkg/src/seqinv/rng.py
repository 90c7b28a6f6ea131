"""Counter-based Gaussian draws keyed by (seed, replication, stream).

Each stream is a Philox generator keyed through ``SeedSequence``; the
``j``-th draw consumes exactly the ``j``-th 64-bit output, so coordinate ``j``
depends on ``(seed, replication, stream, j)`` only. Prefixes of different
length therefore agree, and replications may run in any order or thread.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

STREAM_Y = 0  # noise of the image coefficients
STREAM_X = 1  # noise of the singular values

_HALF_STEP = 2.0 ** -54  # keeps uniforms strictly inside (0, 1)


def generator(seed: int, replication: int, stream: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed), int(replication), int(stream)])
    return np.random.Generator(np.random.Philox(key))


def normal_stream(seed: int, replication: int, stream: int, n: int) -> np.ndarray:
    """First ``n`` standard normal draws of a stream (inverse-CDF transform)."""
    u = generator(seed, replication, stream).random(n) + _HALF_STEP
    return ndtri(u)
