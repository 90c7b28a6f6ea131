"""Minimax benchmark quantities that depend on the (unknown) classes.

``rho(k)`` is the risk of the dimension-``k`` estimator when the singular
values are known, ``psi_nu`` its minimum over ``k`` and ``upsilon_eps`` the
extra price of estimating the singular values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ._numeric import exp_clip
from .adaptive import AlphaSeq, deterministic_bounds, delta_table
from .errors import ConfigError, IndexDomainError
from .model import ClassParams
from .weights import WeightSequence

DEFAULT_K_MAX = 1_000_000
_FIRST_CHUNK = 256


def _chunks(k_max: int):
    lo, size = 1, _FIRST_CHUNK
    while lo <= k_max:
        hi = min(k_max, lo + size - 1)
        yield np.arange(lo, hi + 1)
        lo, size = hi + 1, size * 2


def rho(k: int, nu: float, omega: WeightSequence, s: WeightSequence,
        b: WeightSequence) -> float:
    """``max(omega_k / s_k, nu * sum_{j<=k} omega_j / b_j)``."""
    if k < 1:
        raise IndexDomainError("k must be >= 1")
    js = np.arange(1, k + 1)
    var = nu * math.fsum(exp_clip(omega.log(js) - b.log(js)))
    return max(math.exp(omega.log(k) - s.log(k)), var)


@dataclass(frozen=True)
class OracleDimension:
    k_star: int
    psi_nu: float
    rho_table: np.ndarray = field(repr=False)
    variance_at_k_star: float = 0.0
    bias_at_k_star: float = 0.0
    cap_limited: bool = False


def oracle_k(nu: float, omega: WeightSequence, s: WeightSequence, b: WeightSequence,
             k_max: int = DEFAULT_K_MAX) -> OracleDimension:
    """Smallest minimizer of ``rho(., nu)`` over ``1..k_max``.

    The variance part of ``rho`` is non-decreasing in ``k``; once it reaches
    the running minimum no later ``k`` can improve and the scan stops.
    """
    rho_parts, var_parts, bias_parts = [], [], []
    carry, best = 0.0, math.inf
    stopped = False
    for js in _chunks(k_max):
        terms = exp_clip(omega.log(js) - b.log(js)) * nu
        with np.errstate(over="ignore"):
            var = carry + np.cumsum(terms)
        carry = float(var[-1])
        bias = exp_clip(omega.log(js) - s.log(js))
        r = np.maximum(bias, var)
        running = np.minimum(np.minimum.accumulate(r), best)
        stop = np.flatnonzero(var >= running)
        if stop.size:
            cut = int(stop[0]) + 1
            rho_parts.append(r[:cut]); var_parts.append(var[:cut]); bias_parts.append(bias[:cut])
            stopped = True
            break
        rho_parts.append(r); var_parts.append(var); bias_parts.append(bias)
        best = float(running[-1])
    table = np.concatenate(rho_parts)
    var = np.concatenate(var_parts)
    bias = np.concatenate(bias_parts)
    i = int(np.argmin(table))
    return OracleDimension(i + 1, float(table[i]), table, float(var[i]), float(bias[i]),
                           cap_limited=not stopped)


@dataclass(frozen=True)
class Upsilon:
    value: float
    argmax: int
    cap_limited: bool = False


def upsilon(eps: float, omega: WeightSequence, s: WeightSequence, b: WeightSequence,
            k_max: int = DEFAULT_K_MAX) -> Upsilon:
    """``max_k (omega_k / s_k) min(1, eps / b_k)`` with the smallest attaining index.

    ``omega/s`` is non-increasing and bounds every later term, so the scan
    stops as soon as it drops to the current best value.
    """
    best_log, best_k = -math.inf, 1
    log_eps = math.log(eps)
    for js in _chunks(k_max):
        log_ratio = omega.log(js) - s.log(js)
        log_term = log_ratio + np.minimum(0.0, log_eps - b.log(js))
        running = np.maximum(np.maximum.accumulate(log_term), best_log)
        # stop at the first k whose ratio cannot beat what came before it
        prev = np.concatenate(([best_log], running[:-1]))
        stop = np.flatnonzero(log_ratio <= prev)
        cut = int(stop[0]) if stop.size else js.size
        if cut:
            i = int(np.argmax(log_term[:cut]))
            if log_term[i] > best_log:
                best_log, best_k = float(log_term[i]), int(js[i])
        if stop.size:
            return Upsilon(math.exp(best_log), best_k)
    return Upsilon(math.exp(best_log), best_k, cap_limited=True)


def eta_diagnostic(nu: float, omega: WeightSequence, s: WeightSequence,
                   b: WeightSequence, k_max: int = DEFAULT_K_MAX) -> float:
    """``min(bias, variance) / max(bias, variance)`` at the oracle dimension; in (0, 1]."""
    o = oracle_k(nu, omega, s, b, k_max)
    return min(o.bias_at_k_star, o.variance_at_k_star) / o.psi_nu


def psi_diamond(nu: float, eps: float, omega: WeightSequence, s: WeightSequence,
                b: WeightSequence, k_minus: int) -> float:
    """``min_{k<=K-} max(omega_k / s_k, delta_k nu)`` with ``delta`` built on ``sqrt(b)``."""
    if k_minus < 1:
        raise IndexDomainError("K- must be >= 1")
    js = np.arange(1, k_minus + 1)
    _, dl = delta_table(AlphaSeq.root(b), omega, k_minus)
    vals = np.maximum(exp_clip(omega.log(js) - s.log(js)), dl * nu)
    return float(np.min(vals))


def theoretical_rate(family: str, p: float, b: float, s: float, nu: float, eps: float) -> float:
    """Rate ``max(psi_nu, upsilon_eps)`` of the illustration families, up to constants.

    mild: ``max(nu**(2(p-s)/(2p+2b+1)), eps**(min(p-s, b)/b))``;
    severe: ``max(|log nu|**(-(p-s)/b), |log eps|**(-(p-s)/b))``.
    """
    if family == "mild":
        a = nu ** (2.0 * (p - s) / (2.0 * p + 2.0 * b + 1.0))
        u = eps ** (min(p - s, b) / b) if b > 0 else 1.0
        return max(a, u)
    if family == "severe":
        e = -(p - s) / b
        return max(abs(math.log(nu)) ** e, abs(math.log(eps)) ** e)
    raise ConfigError(f"unknown rate family {family!r}")


def theoretical_exponent(family: str, p: float, b: float, s: float) -> float:
    """Exponent of the ``nu``-part of the rate (in ``nu`` for mild, in ``|log nu|`` for severe)."""
    if family == "mild":
        return 2.0 * (p - s) / (2.0 * p + 2.0 * b + 1.0)
    if family == "severe":
        return -(p - s) / b
    raise ConfigError(f"unknown rate family {family!r}")


@dataclass(frozen=True)
class OracleReport:
    nu: float
    eps: float
    rho_table: np.ndarray = field(repr=False)
    k_star: int = 1
    psi_nu: float = 1.0
    upsilon_eps: float = 1.0
    upsilon_argmax: int = 1
    eta: float = 1.0
    psi_diamond: float | None = None
    k_minus: int | None = None
    theoretical_rate: float | None = None
    theoretical_exponent: float | None = None
    cap_limited: bool = False

    @property
    def benchmark(self) -> float:
        return max(self.psi_nu, self.upsilon_eps)

    def row(self) -> dict:
        return {
            "nu": self.nu, "eps": self.eps, "k_star": self.k_star,
            "psi_nu": self.psi_nu, "upsilon": self.upsilon_eps, "eta": self.eta,
            "psi_diamond": self.psi_diamond, "theoretical_rate": self.theoretical_rate,
        }


def oracle_report(nu: float, eps: float, params: ClassParams,
                  k_max: int = DEFAULT_K_MAX) -> OracleReport:
    w, s, b = params.omega_seq, params.s_seq, params.b_seq
    o = oracle_k(nu, w, s, b, k_max)
    u = upsilon(eps, w, s, b, k_max)
    km = deterministic_bounds(AlphaSeq.lower(b, params.d), nu, eps, w).k
    rate = expo = None
    if params.family in ("mild", "severe"):
        rate = theoretical_rate(params.family, params.p, params.b, params.s, nu, eps)
        expo = theoretical_exponent(params.family, params.p, params.b, params.s)
    return OracleReport(
        nu=nu, eps=eps, rho_table=o.rho_table, k_star=o.k_star, psi_nu=o.psi_nu,
        upsilon_eps=u.value, upsilon_argmax=u.argmax,
        eta=min(o.bias_at_k_star, o.variance_at_k_star) / o.psi_nu,
        psi_diamond=psi_diamond(nu, eps, w, s, b, km), k_minus=km,
        theoretical_rate=rate, theoretical_exponent=expo,
        cap_limited=o.cap_limited or u.cap_limited,
    )
