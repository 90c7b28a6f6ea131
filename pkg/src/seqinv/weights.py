"""Strictly positive weight sequences indexed from 1.

All families carry an exact natural-log evaluator. Severely ill-posed
weights ``exp(-j**(2b))`` underflow in double precision around ``j = 27``
for ``b = 1``, so downstream comparisons are done on the log scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Any

import numpy as np

from .errors import ConfigError, IndexDomainError

FAMILIES = ("sobolev", "poly-decay", "exp-decay", "norm", "constant", "custom-table")

# family -> name of the scalar parameter in config dictionaries
_PARAM_KEY = {
    "sobolev": "p",
    "poly-decay": "b",
    "exp-decay": "b",
    "norm": "s",
    "constant": "value",
}


@dataclass(frozen=True)
class WeightSequence:
    """A lazily evaluated weight sequence ``w_1, w_2, ...``.

    Use the classmethod constructors rather than the raw initializer.
    """

    family: str
    param: float = 0.0
    table: tuple[float, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown weight family {self.family!r}")
        if self.family == "custom-table":
            if not self.table:
                raise ConfigError("custom-table needs a non-empty table")
            arr = np.asarray(self.table, dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ConfigError("custom-table values must be finite and > 0")
        elif self.family == "constant":
            if not (self.param > 0 and math.isfinite(self.param)):
                raise ConfigError("constant weight must be finite and > 0")
        elif not (self.param >= 0 and math.isfinite(self.param)):
            raise ConfigError(f"{self.family} exponent must be finite and >= 0")

    # -- constructors -----------------------------------------------------
    @classmethod
    def sobolev(cls, p: float) -> "WeightSequence":
        """``j**(2p)``"""
        return cls("sobolev", float(p))

    @classmethod
    def poly_decay(cls, b: float) -> "WeightSequence":
        """``j**(-2b)``, mildly ill-posed."""
        return cls("poly-decay", float(b))

    @classmethod
    def exp_decay(cls, b: float) -> "WeightSequence":
        """``exp(-j**(2b))``, severely ill-posed."""
        return cls("exp-decay", float(b))

    @classmethod
    def norm(cls, s: float) -> "WeightSequence":
        """``j**(2s)``, the weights of the loss norm."""
        return cls("norm", float(s))

    @classmethod
    def constant(cls, value: float = 1.0) -> "WeightSequence":
        return cls("constant", float(value))

    @classmethod
    def custom(cls, values) -> "WeightSequence":
        return cls("custom-table", 0.0, tuple(float(v) for v in values))

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> "WeightSequence":
        """Build from a config mapping such as ``{"family": "sobolev", "p": 1.0}``."""
        try:
            family = spec["family"]
        except (KeyError, TypeError):
            raise ConfigError(f"weight spec needs a 'family' key: {spec!r}") from None
        if family == "custom-table":
            if "values" not in spec:
                raise ConfigError("custom-table needs 'values'")
            return cls.custom(spec["values"])
        if family not in _PARAM_KEY:
            raise ConfigError(f"unknown weight family {family!r}")
        key = _PARAM_KEY[family]
        if family == "constant":
            return cls.constant(spec.get(key, 1.0))
        if key not in spec:
            raise ConfigError(f"{family} weights need parameter {key!r}")
        return cls(family, float(spec[key]))

    def to_dict(self) -> dict[str, Any]:
        if self.family == "custom-table":
            return {"family": self.family, "values": list(self.table)}
        return {"family": self.family, _PARAM_KEY[self.family]: self.param}

    # -- evaluation -------------------------------------------------------
    @property
    def length(self) -> int | None:
        """Number of available entries; ``None`` for infinite families."""
        return len(self.table) if self.table is not None else None

    def _check_index(self, j):
        jj = np.asarray(j)
        if jj.size and (np.any(jj < 1)):
            raise IndexDomainError(f"weight index must be >= 1, got {j!r}")
        if self.table is not None and jj.size and np.any(jj > len(self.table)):
            raise IndexDomainError(
                f"index {int(np.max(jj))} beyond custom table of length {len(self.table)}"
            )
        return jj

    def log(self, j):
        """Natural log of the weight at index ``j`` (scalar or integer array)."""
        jj = self._check_index(j)
        jf = jj.astype(float)
        fam, q = self.family, self.param
        if fam in ("sobolev", "norm"):
            out = 2.0 * q * np.log(jf)
        elif fam == "poly-decay":
            out = -2.0 * q * np.log(jf)
        elif fam == "exp-decay":
            out = -np.power(jf, 2.0 * q)
        elif fam == "constant":
            out = np.full(jf.shape, math.log(q))
        else:
            out = np.log(np.asarray(self.table))[jj.astype(np.int64) - 1]
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, j):
        """Weight at index ``j``; may underflow to 0.0 for exp-decay."""
        jj = self._check_index(j)
        jf = jj.astype(float)
        fam, q = self.family, self.param
        if fam in ("sobolev", "norm"):
            out = np.power(jf, 2.0 * q)
        elif fam == "poly-decay":
            out = np.power(jf, -2.0 * q)
        elif fam == "exp-decay":
            out = np.exp(-np.power(jf, 2.0 * q))
        elif fam == "constant":
            out = np.full(jf.shape, q)
        else:
            out = np.asarray(self.table)[jj.astype(np.int64) - 1]
        return float(out) if np.ndim(out) == 0 else out

    def values(self, n: int) -> np.ndarray:
        """Weights at ``1..n``."""
        return self(np.arange(1, n + 1))

    def log_values(self, n: int) -> np.ndarray:
        """Log-weights at ``1..n``."""
        return self.log(np.arange(1, n + 1))

    @property
    def nondecreasing(self) -> bool:
        return self.family in ("sobolev", "norm", "constant")

    def first_index_above(self, log_threshold: float, upper: int) -> int | None:
        """Smallest ``j`` in ``1..upper`` with ``log w_j > log_threshold``, else None.

        Closed form for the power families; chunked scan otherwise.
        """
        if upper < 1:
            return None
        if self.family == "constant":
            return 1 if math.log(self.param) > log_threshold else None
        if self.family in ("sobolev", "norm"):
            if self.param == 0.0:
                return 1 if 0.0 > log_threshold else None
            # j**(2q) > t  <=>  log j > log_threshold / (2q)
            root = min(log_threshold / (2.0 * self.param), math.log(upper) + 1.0)
            guess = max(1, int(math.floor(math.exp(root))))
            j = max(1, guess - 2)
            while j <= upper and not self.log(j) > log_threshold:
                j += 1
            return j if j <= upper else None
        if self.table is not None:
            upper = min(upper, len(self.table))
        lo, chunk = 1, 256
        while lo <= upper:
            hi = min(upper, lo + chunk - 1)
            hit = np.flatnonzero(self.log(np.arange(lo, hi + 1)) > log_threshold)
            if hit.size:
                return lo + int(hit[0])
            lo, chunk = hi + 1, chunk * 2
        return None


def evaluate(seq: WeightSequence, j: int) -> float:
    """The ``j``-th weight (1-based)."""
    return seq(j)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of :func:`check_admissible`; indices are 1-based first violations."""

    J: int
    normalization_failures: tuple[str, ...]
    ratio_violation: int | None
    decay_violation: int | None

    @property
    def passed(self) -> bool:
        return (
            not self.normalization_failures
            and self.ratio_violation is None
            and self.decay_violation is None
        )

    def summary(self) -> str:
        if self.passed:
            return "pass"
        parts = []
        if self.normalization_failures:
            parts.append("normalization: " + ",".join(self.normalization_failures))
        if self.ratio_violation is not None:
            parts.append(f"omega/s non-increasing fails at j={self.ratio_violation}")
        if self.decay_violation is not None:
            parts.append(f"b non-increasing fails at j={self.decay_violation}")
        return "; ".join(parts)


def _first_increase(logv: np.ndarray, rtol: float = 1e-12) -> int | None:
    step = np.diff(logv)
    tol = rtol * np.maximum(1.0, np.abs(logv[1:]))
    bad = np.flatnonzero(step > tol)
    return int(bad[0]) + 2 if bad.size else None


def check_admissible(
    omega: WeightSequence, s: WeightSequence, b: WeightSequence, J: int
) -> AdmissibilityReport:
    """Check the minimal regularity conditions on indices ``1..J``.

    The three sequences must start at 1, ``omega/s`` must be non-increasing
    and ``b`` must be non-increasing. Violations are reported, not raised.
    """
    if J < 2:
        raise IndexDomainError("admissibility check needs J >= 2")
    norm_fail = tuple(
        name
        for name, seq in (("omega", omega), ("s", s), ("b", b))
        if abs(seq.log(1)) > 1e-12
    )
    lw, ls, lb = omega.log_values(J), s.log_values(J), b.log_values(J)
    return AdmissibilityReport(
        J=J,
        normalization_failures=norm_fail,
        ratio_violation=_first_increase(lw - ls),
        decay_violation=_first_increase(lb),
    )
