"""Small numeric helpers used by several modules."""
from __future__ import annotations

import math

import numpy as np

_ULP_GUARD = 4.0 * np.finfo(float).eps


def _near_int(r: float) -> int | None:
    n = round(r)
    if abs(r - n) <= _ULP_GUARD * max(1.0, abs(r)):
        return int(n)
    return None


def floor_recip(x: float) -> int:
    """``floor(1/x)`` robust to reciprocals that land a few ulps off an integer."""
    r = 1.0 / x
    n = _near_int(r)
    return n if n is not None else int(math.floor(r))


def ceil_recip(x: float) -> int:
    """``ceil(1/x)`` with the same guard as :func:`floor_recip`."""
    r = 1.0 / x
    n = _near_int(r)
    return n if n is not None else int(math.ceil(r))


def exp_clip(logv):
    """``exp`` that returns inf instead of warning on overflow."""
    with np.errstate(over="ignore"):
        return np.exp(logv)
