"""Fully data-driven choice of the dimension parameter.

The selection combines a penalized contrast (model selection) with a
Lepski-type comparison of estimators. The random penalty and the random
upper bound on admissible dimensions are built from the observed singular
values ``X``; their deterministic counterparts are built from the operator
class and are used only for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np

from ._numeric import exp_clip, floor_recip
from .errors import IndexDomainError
from .estimator import EstimatorOutput, estimate
from .model import ObservationSet
from .weights import WeightSequence

PEN_HAT_CONSTANT = 600.0
PEN_DET_CONSTANT = 60.0
SANDWICH_UPPER = 30.0

_FIRST_CHUNK = 256


class PrefixTooShort(ValueError):
    """The observed prefix ends before a dimension bound is decided."""


def v_eps(eps: float) -> float:
    """``1 / (8 log(log(1/eps + 20)))``, the exponent slack of the M-bound."""
    return 1.0 / (8.0 * math.log(math.log(1.0 / eps + 20.0)))


# ---------------------------------------------------------------------------
# sequences alpha entering Delta, delta and the dimension bounds
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AlphaSeq:
    """A sequence ``alpha`` given through ``log(alpha_j**2)``.

    ``available`` bounds the indices that can be evaluated (``None`` for
    analytic sequences defined at every index).
    """

    tag: str
    log_sq: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    available: int | None = None

    @classmethod
    def from_values(cls, alpha, tag: str = "custom") -> "AlphaSeq":
        a = np.asarray(alpha, dtype=float)
        with np.errstate(divide="ignore"):
            logs = 2.0 * np.log(np.abs(a))
        return cls(tag, lambda js: logs[np.asarray(js) - 1], a.size)

    @classmethod
    def from_log_values(cls, log_alpha, tag: str = "eigenvalues-a") -> "AlphaSeq":
        la = np.asarray(log_alpha, dtype=float)
        return cls(tag, lambda js: 2.0 * la[np.asarray(js) - 1], la.size)

    @classmethod
    def observed(cls, X) -> "AlphaSeq":
        return cls.from_values(X, tag="X")

    @classmethod
    def upper(cls, b_seq: WeightSequence, d: float) -> "AlphaSeq":
        """``sqrt(4 d b_j)``, giving the bounds K+ and M+."""
        c = math.log(4.0 * d)
        return cls("sqrt(4d*b)", lambda js: c + b_seq.log(np.asarray(js)), b_seq.length)

    @classmethod
    def lower(cls, b_seq: WeightSequence, d: float) -> "AlphaSeq":
        """``sqrt(b_j / (4 d))``, giving the bound K-."""
        c = math.log(4.0 * d)
        return cls("sqrt(b/(4d))", lambda js: b_seq.log(np.asarray(js)) - c, b_seq.length)

    @classmethod
    def root(cls, b_seq: WeightSequence) -> "AlphaSeq":
        """``sqrt(b_j)``."""
        return cls("sqrt(b)", lambda js: b_seq.log(np.asarray(js)), b_seq.length)


def _as_alpha(alpha) -> AlphaSeq:
    return alpha if isinstance(alpha, AlphaSeq) else AlphaSeq.from_values(alpha)


def delta_table(alpha, omega: WeightSequence, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(Delta_k, delta_k)`` for ``k = 1..n``.

    ``Delta_k = max_{j<=k} omega_j / alpha_j**2`` and
    ``delta_k = k Delta_k log(max(Delta_k, k+2)) / log(k+2)``.
    A zero ``alpha_j`` makes every later entry infinite.
    """
    alpha = _as_alpha(alpha)
    js = np.arange(1, n + 1)
    log_ratio = omega.log(js) - alpha.log_sq(js)
    log_Delta = np.maximum.accumulate(log_ratio)
    lk2 = np.log(js + 2.0)
    factor = np.maximum(log_Delta, lk2) / lk2
    with np.errstate(invalid="ignore", over="ignore"):
        delta = exp_clip(np.log(js) + log_Delta) * factor
    return exp_clip(log_Delta), delta


def delta(k: int, alpha, omega: WeightSequence) -> tuple[float, float]:
    """``(Delta_k, delta_k)`` for a single ``k``; ``alpha`` holds at least ``k`` values."""
    if k < 1:
        raise IndexDomainError("k must be >= 1")
    alpha = _as_alpha(alpha)
    if np.any(np.isneginf(alpha.log_sq(np.arange(1, k + 1)))):
        raise ValueError("alpha_j must be non-zero for j <= k")
    D, d = delta_table(alpha, omega, k)
    return float(D[-1]), float(d[-1])


# ---------------------------------------------------------------------------
# dimension bounds
# ---------------------------------------------------------------------------
def n_circ(nu: float, omega: WeightSequence) -> int:
    """Largest ``N <= floor(1/nu)`` with ``max_{j<=N} omega_j <= 1/nu``."""
    top = floor_recip(nu)
    first = omega.first_index_above(math.log(1.0 / nu), top)
    if first is None:
        return top
    return max(first - 1, 1)


def _scan(cond, lo: int, hi: int, available: int | None, limit: int | None):
    """First ``j`` in ``lo..hi`` with ``cond`` true.

    Returns ``(j, status)``; status is "found", "empty" (the range was fully
    examined), "truncated" (data ran out at the hard limit) or "undecided"
    (more data would be needed).
    """
    stop = hi if available is None else min(hi, available)
    j0, chunk = lo, _FIRST_CHUNK
    while j0 <= stop:
        j1 = min(stop, j0 + chunk - 1)
        js = np.arange(j0, j1 + 1)
        hit = np.flatnonzero(cond(js))
        if hit.size:
            return j0 + int(hit[0]), "found"
        j0, chunk = j1 + 1, chunk * 2
    if available is None or hi <= available:
        return None, "empty"
    if limit is not None and available >= limit:
        return None, "truncated"
    return None, "undecided"


def _omega_plus_cond(alpha: AlphaSeq, omega: WeightSequence, log_rhs: float):
    """Condition ``alpha_j**2 / (j omega+_j) <= rhs`` evaluated on consecutive chunks."""
    carry = [omega.log(1)]

    def cond(js):
        lw = np.maximum.accumulate(np.maximum(omega.log(js), carry[0]))
        carry[0] = lw[-1]
        return alpha.log_sq(js) - np.log(js) - lw <= log_rhs

    return cond


def n_bound(alpha, nu: float, omega: WeightSequence, limit: int | None = None):
    """``N^alpha``: first ``2 <= j <= N_circ`` with ``alpha_j**2 / (j omega+_j) <= nu |log nu|``, minus 1.

    Returns ``(value, status)``; ``value`` is None when undecided and is
    clipped to the available data when truncated.
    """
    alpha = _as_alpha(alpha)
    nc = n_circ(nu, omega)
    log_rhs = math.log(nu * abs(math.log(nu)))
    j, status = _scan(_omega_plus_cond(alpha, omega, log_rhs), 2, nc, alpha.available, limit)
    if status == "found":
        return j - 1, status
    if status == "empty":
        return nc, status
    if status == "truncated":
        return alpha.available, status
    return None, status


def m_bound(alpha, eps: float, limit: int | None = None):
    """``M^alpha``: first ``2 <= j <= floor(1/eps)`` with ``alpha_j**2 <= eps**(1 - v_eps)``, minus 1."""
    alpha = _as_alpha(alpha)
    top = floor_recip(eps)
    log_rhs = (1.0 - v_eps(eps)) * math.log(eps)
    j, status = _scan(lambda js: alpha.log_sq(js) <= log_rhs, 2, top, alpha.available, limit)
    if status == "found":
        return j - 1, status
    if status == "empty":
        return top, status
    if status == "truncated":
        return alpha.available, status
    return None, status


def k_bound(alpha, nu: float, eps: float, omega: WeightSequence, limit: int | None = None):
    """``(N, M, K, status)`` with ``K = min(N, M)``; K is None when undecided."""
    N, sn = n_bound(alpha, nu, omega, limit)
    M, sm = m_bound(alpha, eps, limit)
    if sn == "undecided" or sm == "undecided":
        return N, M, None, "undecided"
    status = "truncated" if "truncated" in (sn, sm) else "ok"
    return N, M, min(N, M), status


@dataclass(frozen=True)
class DimensionBounds:
    """Data-driven dimension bounds and, in diagnostic mode, their deterministic counterparts."""

    n_circ: int
    v_eps: float
    n_hat: int
    m_hat: int
    k_hat: int
    omega_plus: np.ndarray = field(repr=False)
    n_minus: int | None = None
    m_minus: int | None = None
    k_minus: int | None = None
    n_plus: int | None = None
    m_plus: int | None = None
    k_plus: int | None = None
    truncated: bool = False


@dataclass(frozen=True)
class DeterministicBounds:
    n: int
    m: int
    k: int


def deterministic_bounds(alpha: AlphaSeq, nu: float, eps: float,
                         omega: WeightSequence) -> DeterministicBounds:
    N, M, K, _ = k_bound(alpha, nu, eps, omega)
    return DeterministicBounds(N, M, K)


def dimension_bounds(obs: ObservationSet, omega: WeightSequence, *,
                     d: float | None = None, b_seq: WeightSequence | None = None,
                     limit: int | None = None) -> DimensionBounds:
    """Bounds from the observed ``X`` plus K-/K+ when ``d`` and ``b_seq`` are given.

    ``limit`` is the full truncation length when ``obs`` holds only a prefix;
    a ``ValueError`` is raised if the prefix is too short to decide.
    """
    nu, eps = obs.noise.nu, obs.noise.eps
    limit = obs.J if limit is None else limit
    N, M, K, status = k_bound(AlphaSeq.observed(obs.X), nu, eps, omega, limit)
    if K is None:
        raise PrefixTooShort("observation prefix too short to determine the dimension bounds")
    extra = {}
    if d is not None and b_seq is not None:
        lo = deterministic_bounds(AlphaSeq.lower(b_seq, d), nu, eps, omega)
        hi = deterministic_bounds(AlphaSeq.upper(b_seq, d), nu, eps, omega)
        extra = dict(n_minus=lo.n, m_minus=lo.m, k_minus=lo.k,
                     n_plus=hi.n, m_plus=hi.m, k_plus=hi.k)
    return DimensionBounds(
        n_circ=n_circ(nu, omega), v_eps=v_eps(eps), n_hat=N, m_hat=M, k_hat=K,
        omega_plus=np.exp(np.maximum.accumulate(omega.log_values(K))),
        truncated=status == "truncated", **extra,
    )


# ---------------------------------------------------------------------------
# penalties, contrast and selection
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PenaltyTable:
    alpha_tag: str
    Delta: np.ndarray
    delta: np.ndarray
    pen: np.ndarray
    constant: float


def penalty_table(alpha, nu: float, omega: WeightSequence, K: int,
                  constant: float = PEN_HAT_CONSTANT) -> PenaltyTable:
    """``pen_k = constant * delta_k * nu`` for ``k = 1..K``."""
    alpha = _as_alpha(alpha)
    D, dl = delta_table(alpha, omega, K)
    return PenaltyTable(alpha.tag, D, dl, constant * dl * nu, constant)


def pen_hat(obs: ObservationSet, nu: float, k: int, omega: WeightSequence,
            constant: float = PEN_HAT_CONSTANT) -> float:
    """Data-driven penalty ``constant * delta_k^X * nu``."""
    if not 1 <= k <= obs.J:
        raise IndexDomainError(f"k={k} outside 1..{obs.J}")
    return float(penalty_table(AlphaSeq.observed(obs.X), nu, omega, k, constant).pen[-1])


@dataclass(frozen=True)
class SelectionTrace:
    contrast: np.ndarray
    penalized: np.ndarray
    k_hat: int
    prefix_norms: np.ndarray = field(repr=False)


def contrast_and_select(est, pen) -> SelectionTrace:
    """Contrast ``Psi_k = max_{k<=j<=K} (S_j - S_k - pen_j)`` and its penalized argmin.

    ``est`` is an :class:`EstimatorOutput` (or its prefix norms ``S``) at the
    largest admissible dimension ``K``; ``pen`` a non-decreasing sequence of
    length ``K``. One backward sweep keeps ``max_{j>=k}(S_j - pen_j)``.
    Ties resolve to the smallest index.
    """
    S = np.asarray(est.prefix_norms if isinstance(est, EstimatorOutput) else est, dtype=float)
    pen = np.asarray(pen.pen if isinstance(pen, PenaltyTable) else pen, dtype=float)
    K = S.size
    if K < 1 or pen.size < K:
        raise IndexDomainError("need K >= 1 and a penalty for every k <= K")
    pen = pen[:K]
    if np.any(np.diff(pen) < 0):
        raise ValueError("penalty sequence must be non-decreasing")
    V = S - pen
    # Psi_k + pen_k = max(0, max_{j>k} V_j - V_k); the j = k term is exactly 0,
    # which keeps exact ties exact
    later = np.full(K, -np.inf)
    if K > 1:
        later[:-1] = np.maximum.accumulate(V[:0:-1])[::-1]
    with np.errstate(invalid="ignore"):
        penalized = np.maximum(later - V, 0.0)
        penalized[np.isnan(V)] = np.nan
        contrast = penalized - pen
    ranked = np.where(np.isnan(penalized), np.inf, penalized)
    return SelectionTrace(contrast, penalized, int(np.argmin(ranked)) + 1, S)


def adaptive_estimate(obs: ObservationSet, omega: WeightSequence,
                      penalty_constant: float = PEN_HAT_CONSTANT, *,
                      limit: int | None = None):
    """Run the full data-driven pipeline on one observation set.

    Returns ``(estimate at k_hat, SelectionTrace, DimensionBounds)``.
    """
    bounds = dimension_bounds(obs, omega, limit=limit)
    K = bounds.k_hat
    full = estimate(obs, K, omega)
    table = penalty_table(AlphaSeq.observed(obs.X), obs.noise.nu, omega, K, penalty_constant)
    trace = contrast_and_select(full, table)
    return full.truncate(trace.k_hat), trace, bounds


# ---------------------------------------------------------------------------
# diagnostics that need the true singular values
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EventFlags:
    """Concentration events of the random penalty and dimension bound.

    ``clipped`` is set when an event refers to indices beyond the observed
    length; it is then evaluated on the available indices only.
    """

    omega_eps: bool
    omega_tilde: bool
    mho: bool
    sandwich_holds: bool
    bounds_hold: bool
    k_minus: int
    k_hat: int
    k_plus: int
    m_plus: int
    pen_ratio_min: float
    pen_ratio_max: float
    clipped: bool = False


def event_flags(obs: ObservationSet, true_log_eigenvalues, d: float,
                b_seq: WeightSequence, omega: WeightSequence, *,
                pen_constant: float = PEN_HAT_CONSTANT,
                det_constant: float = PEN_DET_CONSTANT,
                limit: int | None = None) -> EventFlags:
    """Evaluate the events Omega_eps, Omega~_{M+ + 1} and mho on one realization."""
    nu, eps = obs.noise.nu, obs.noise.eps
    log_a = np.asarray(true_log_eigenvalues, dtype=float)
    X = obs.X
    n = min(X.size, log_a.size)
    hi = deterministic_bounds(AlphaSeq.upper(b_seq, d), nu, eps, omega)
    lo = deterministic_bounds(AlphaSeq.lower(b_seq, d), nu, eps, omega)
    clipped = False

    def upto(m):
        nonlocal clipped
        if m > n:
            clipped = True
        return min(m, n)

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        m1 = upto(hi.m)
        log_absX = np.log(np.abs(X[:m1]))
        a_over_x = np.sign(X[:m1]) * np.exp(log_a[:m1] - log_absX)
        om_eps = bool(np.all((np.abs(a_over_x - 1.0) <= 0.5) & (X[:m1] ** 2 >= eps)))
        m2 = upto(hi.m + 1)
        x_over_a = X[:m2] * np.exp(-log_a[:m2])
        om_tilde = bool(np.all(np.abs(x_over_a - 1.0) <= 1.0 / 3.0))

    N, M, K_hat, _ = k_bound(AlphaSeq.observed(X), nu, eps, omega, limit or obs.J)
    if K_hat is None:
        raise PrefixTooShort("observation prefix too short to determine K_hat")
    kp = upto(hi.k)
    if kp >= 1:
        ph = penalty_table(AlphaSeq.observed(X), nu, omega, kp, pen_constant).pen
        pa = penalty_table(AlphaSeq.from_log_values(log_a), nu, omega, kp, det_constant).pen
        ratio = ph / pa
        sandwich = bool(np.all((pa <= ph) & (ph <= SANDWICH_UPPER * pa)))
        rmin, rmax = float(np.min(ratio)), float(np.max(ratio))
    else:
        sandwich, rmin, rmax = True, float("nan"), float("nan")
    bounds_ok = lo.k <= K_hat <= hi.k
    return EventFlags(
        omega_eps=om_eps, omega_tilde=om_tilde, mho=sandwich and bounds_ok,
        sandwich_holds=sandwich, bounds_hold=bounds_ok,
        k_minus=lo.k, k_hat=K_hat, k_plus=hi.k, m_plus=hi.m,
        pen_ratio_min=rmin, pen_ratio_max=rmax, clipped=clipped,
    )


@dataclass(frozen=True)
class ConditionLReport:
    """Grid evaluation of ``eps**-7 b_{M+ + 1}**(-1/2) exp(-b_{M+ + 1} / (72 eps d))``.

    The expression uses ``M+`` for the bound index and ``d`` for the class
    width. ``divergent`` is set when the largest value sits at the finest
    grid point and still grows there.
    """

    eps: np.ndarray
    m_plus: np.ndarray
    log_values: np.ndarray
    L: float
    log_L: float
    divergent: bool


def check_condition_L(b_seq: WeightSequence, d: float, eps_grid,
                      omega: WeightSequence | None = None) -> ConditionLReport:
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    omega = omega or WeightSequence.constant(1.0)
    up = AlphaSeq.upper(b_seq, d)
    m_plus, logs = [], []
    for e in eps:
        M, _ = m_bound(up, float(e))
        lb = b_seq.log(M + 1)
        logs.append(-7.0 * math.log(e) - 0.5 * lb - math.exp(lb) / (72.0 * e * d))
        m_plus.append(M)
    logs = np.asarray(logs)
    top = int(np.argmax(logs))
    divergent = bool(len(logs) > 1 and top == len(logs) - 1 and logs[-1] > logs[-2])
    log_L = float(logs[top])
    return ConditionLReport(eps, np.asarray(m_plus), logs, float(exp_clip(log_L)), log_L, divergent)
