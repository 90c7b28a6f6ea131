"""Problem instances, class membership and simulation of the sequence model.

Observations follow ``Y_j = a_j f_j + sqrt(nu) xi_j`` and
``X_j = a_j + sqrt(eps) eta_j`` with independent standard normal noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import rng
from ._numeric import ceil_recip
from .errors import ConfigError, IndexDomainError
from .weights import WeightSequence

DEFAULT_J_CAP = 100_000

SOLUTION_KINDS = ("boundary-single", "boundary-spread")
OPERATOR_KINDS = {
    "mid-class": "mid-class",
    "mid-class eigenvalues": "mid-class",
    "edge": "edge",
    "edge eigenvalues": "edge",
    "edge-low": "edge-low",
}


@dataclass(frozen=True)
class ClassParams:
    """Solution class radius ``r``, operator class width ``d`` and weights.

    ``p``, ``b``, ``s`` are the exponents of the illustration families and are
    ``None`` for custom sequences.
    """

    r: float
    d: float
    s_seq: WeightSequence
    b_seq: WeightSequence
    omega_seq: WeightSequence
    p: float | None = None
    b: float | None = None
    s: float | None = None
    family: str = "custom"

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigError(f"r must be > 0, got {self.r}")
        if not self.d >= 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if self.family in ("mild", "severe"):
            if not (self.p >= self.s >= 0 and self.b >= 0):
                raise ConfigError("need p >= s >= 0 and b >= 0")

    @classmethod
    def illustration(cls, family: str, p: float, b: float, s: float = 0.0,
                     r: float = 1.0, d: float = 2.0) -> "ClassParams":
        """Sobolev solutions with polynomial ("mild") or exponential ("severe") decay."""
        if family == "mild":
            b_seq = WeightSequence.poly_decay(b)
        elif family == "severe":
            b_seq = WeightSequence.exp_decay(b)
        else:
            raise ConfigError(f"unknown illustration family {family!r}")
        return cls(
            r=float(r), d=float(d),
            s_seq=WeightSequence.sobolev(p), b_seq=b_seq,
            omega_seq=WeightSequence.norm(s),
            p=float(p), b=float(b), s=float(s), family=family,
        )


@dataclass(frozen=True)
class ProblemInstance:
    """Truncated solution coefficients and operator singular values.

    Singular values are stored on the log scale; ``eigenvalues`` may
    underflow to zero for severely ill-posed operators.
    """

    coeffs: np.ndarray
    log_eigenvalues: np.ndarray
    params: ClassParams
    kind: str = "custom"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        la = np.asarray(self.log_eigenvalues, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ConfigError("coefficients must be a non-empty 1-d array")
        if la.shape != c.shape:
            raise ConfigError("coefficients and eigenvalues must have equal length")
        if not np.all(np.isfinite(la)):
            raise ConfigError("all singular values must be strictly positive")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "log_eigenvalues", la)

    @property
    def J(self) -> int:
        return self.coeffs.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.exp(self.log_eigenvalues)

    @classmethod
    def from_arrays(cls, coeffs, eigenvalues, params: ClassParams) -> "ProblemInstance":
        a = np.asarray(eigenvalues, dtype=float)
        if np.any(a <= 0):
            raise ConfigError("all singular values must be strictly positive")
        return cls(np.asarray(coeffs, dtype=float), np.log(a), params)


@dataclass(frozen=True)
class NoiseLevels:
    nu: float
    eps: float

    def __post_init__(self):
        for name in ("nu", "eps"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"noise level {name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class ObservationSet:
    """One realization of ``(Y_j, X_j)``, ``j = 1..J``."""

    Y: np.ndarray
    X: np.ndarray
    noise: NoiseLevels
    seed: int = 0
    replication: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if Y.shape != X.shape or Y.ndim != 1:
            raise ConfigError("Y and X must be 1-d arrays of equal length")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)

    @property
    def J(self) -> int:
        return self.Y.size


def truncation_length(noise: NoiseLevels, J_cap: int = DEFAULT_J_CAP) -> int:
    """``min(ceil(1/nu), ceil(1/eps), J_cap)``; no selection rule reads beyond it."""
    return int(min(ceil_recip(noise.nu), ceil_recip(noise.eps), J_cap))


def make_instance(kind: str, params: ClassParams, J: int,
                  operator: str = "mid-class") -> ProblemInstance:
    """Canonical in-class instance of length ``J``.

    ``kind`` picks the solution ("boundary-single" or "boundary-spread"),
    ``operator`` the singular values: "mid-class" (``a_j = sqrt(b_j)``),
    "edge" (``sqrt(d b_j)``) or "edge-low" (``sqrt(b_j / d)``).
    """
    if J < 1:
        raise IndexDomainError("J must be >= 1")
    op = OPERATOR_KINDS.get(operator)
    if op is None:
        raise ConfigError(f"unknown operator kind {operator!r}")
    log_s = params.s_seq.log_values(J)
    if kind == "boundary-single":
        coeffs = np.zeros(J)
        coeffs[0] = math.sqrt(params.r * math.exp(-log_s[0]))
    elif kind == "boundary-spread":
        j = np.arange(1, J + 1, dtype=float)
        shape = np.exp(-0.5 * log_s) / j
        # s_j * shape_j**2 = j**-2 exactly, so normalize against that sum
        total = math.fsum(np.exp(log_s + 2.0 * np.log(shape)))
        coeffs = shape * math.sqrt(params.r / total)
    else:
        raise ConfigError(f"unknown instance kind {kind!r}")
    log_b = params.b_seq.log_values(J)
    shift = {"mid-class": 0.0, "edge": math.log(params.d), "edge-low": -math.log(params.d)}[op]
    log_a = 0.5 * (log_b + shift)
    return ProblemInstance(coeffs, log_a, params, kind=f"{kind}/{op}")


@dataclass(frozen=True)
class Membership:
    passed: bool
    value: float


def check_solution_membership(coeffs, s_seq: WeightSequence, r: float,
                              rtol: float = 1e-12) -> Membership:
    """Weighted norm ``sum_j s_j f_j**2`` compared with the radius ``r``."""
    c = np.asarray(coeffs, dtype=float)
    s = s_seq.values(c.size)
    value = math.fsum(s * c * c)
    return Membership(value <= r * (1.0 + rtol), value)


def check_operator_membership(eigenvalues, b_seq: WeightSequence, d: float,
                              J: int | None = None, *, log_eigenvalues=None,
                              rtol: float = 1e-12) -> Membership:
    """Check ``1/d <= a_j**2 / b_j <= d`` for ``j <= J`` on the log scale.

    ``value`` is the ratio ``a_j**2 / b_j`` farthest from 1 in log terms.
    """
    if log_eigenvalues is None:
        a = np.asarray(eigenvalues, dtype=float)
        if np.any(a <= 0):
            return Membership(False, float("nan"))
        log_a = np.log(a)
    else:
        log_a = np.asarray(log_eigenvalues, dtype=float)
    if J is not None:
        log_a = log_a[:J]
    log_b = b_seq.log_values(log_a.size)
    log_ratio = 2.0 * log_a - log_b
    tol = rtol * np.maximum(1.0, np.abs(log_b))
    ok = bool(np.all(np.abs(log_ratio) <= math.log(d) + tol))
    worst = float(log_ratio[np.argmax(np.abs(log_ratio))])
    return Membership(ok, math.exp(worst))


def simulate_prefix(instance: ProblemInstance, noise: NoiseLevels, seed: int,
                    replication: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``n`` coordinates of :func:`simulate`; identical draws by construction."""
    n = min(n, instance.J)
    xi = rng.normal_stream(seed, replication, rng.STREAM_Y, n)
    eta = rng.normal_stream(seed, replication, rng.STREAM_X, n)
    a = np.exp(instance.log_eigenvalues[:n])
    Y = a * instance.coeffs[:n] + math.sqrt(noise.nu) * xi
    X = a + math.sqrt(noise.eps) * eta
    return Y, X


def simulate(instance: ProblemInstance, noise: NoiseLevels, seed: int,
             replication: int = 0) -> ObservationSet:
    """Draw one observation set of length ``instance.J``."""
    Y, X = simulate_prefix(instance, noise, seed, replication, instance.J)
    return ObservationSet(Y, X, noise, int(seed), int(replication))
