"""Monte Carlo risk estimation, rate fitting and checks of the risk inequalities."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np

from . import rng as _rng
from .adaptive import (
    PEN_HAT_CONSTANT, AlphaSeq, PrefixTooShort, EventFlags, adaptive_estimate, contrast_and_select,
    delta_table, dimension_bounds, event_flags, n_bound,
)
from .errors import DataError
from .estimator import (
    EstimatorOutput, coefficients, estimate, projection_errors, risk_error_sq, tail_sums,
)
from .model import (
    ClassParams, NoiseLevels, ObservationSet, ProblemInstance, make_instance,
    simulate, simulate_prefix, truncation_length,
)
from .oracle import OracleReport, oracle_k, oracle_report
from .weights import WeightSequence

_MIN_PREFIX = 64


@dataclass
class LemmaCheckReport:
    lemma: str
    trials: int
    violations: int
    worst_margin: float
    notes: str = ""
    details: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0


# ---------------------------------------------------------------------------
# key oracle inequality
# ---------------------------------------------------------------------------
KEY_LEMMA_CONSTANTS = (7.0, 78.0, 42.0)


def key_lemma_sides(est: EstimatorOutput, instance: ProblemInstance, pen,
                    omega: WeightSequence, tails: np.ndarray | None = None):
    """Left side and the right side for every ``k <= K`` of the oracle inequality.

    ``est`` holds the estimator at the largest dimension ``K``; the selected
    dimension is recomputed from ``pen``.
    """
    pen = np.asarray(pen, dtype=float)[: est.k]
    trace = contrast_and_select(est, pen)
    if tails is None:
        tails = tail_sums(instance, omega)
    lhs = risk_error_sq(est.truncate(trace.k_hat), instance, omega, tails)
    bias_sq = tails[1 : est.k + 1]
    excess = np.max(np.maximum(projection_errors(est, instance, omega) - pen / 6.0, 0.0))
    c_pen, c_bias, c_exc = KEY_LEMMA_CONSTANTS
    rhs = c_pen * pen + c_bias * bias_sq + c_exc * excess
    return lhs, rhs, trace.k_hat


def check_key_lemma(est: EstimatorOutput, instance: ProblemInstance, pen,
                    omega: WeightSequence, rtol: float = 1e-9,
                    tails: np.ndarray | None = None) -> LemmaCheckReport:
    """Check the deterministic oracle inequality on one realization, for every ``k``."""
    lhs, rhs, k_sel = key_lemma_sides(est, instance, pen, omega, tails)
    slack = rhs - lhs
    bad = slack < -rtol * np.maximum(np.abs(rhs), abs(lhs))
    scale = np.maximum(np.abs(rhs), 1e-300)
    return LemmaCheckReport(
        "key-lemma", trials=1, violations=int(bool(np.any(bad))),
        worst_margin=float(np.min(slack / scale)),
        details={"lhs": lhs, "k_selected": k_sel, "violating_k": (np.flatnonzero(bad) + 1).tolist()},
    )


def random_bundle(gen: np.random.Generator, max_K: int = 50):
    """A random in-class instance, its estimator at a random ``K`` and a random monotone penalty."""
    family = "mild" if gen.random() < 0.5 else "severe"
    p = gen.uniform(0.5, 3.0)
    s = gen.uniform(0.0, p)
    b = gen.uniform(0.25, 2.0) if family == "mild" else gen.uniform(0.1, 1.0)
    r = math.exp(gen.uniform(math.log(0.1), math.log(10.0)))
    d = gen.uniform(1.0, 4.0)
    params = ClassParams.illustration(family, p, b, s, r, d)
    K = int(gen.integers(1, max_K + 1))
    J = K + int(gen.integers(0, 20))
    log_s = params.s_seq.log_values(J)
    raw = gen.standard_normal(J) * np.exp(-0.5 * log_s)
    raw *= math.sqrt(gen.uniform(0.0, 1.0) * r / math.fsum(np.exp(log_s) * raw * raw))
    log_a = 0.5 * (params.b_seq.log_values(J) + gen.uniform(-math.log(d), math.log(d), J))
    instance = ProblemInstance(raw, log_a, params, kind="random")
    noise = NoiseLevels(*np.exp(gen.uniform(math.log(1e-5), math.log(0.5), 2)))
    obs = simulate(instance, noise, int(gen.integers(2**63)), 0)
    est = estimate(obs, K, params.omega_seq)
    pen = np.cumsum(gen.exponential(size=K)) * math.exp(gen.uniform(math.log(1e-6), math.log(1e2)))
    return est, instance, pen, params.omega_seq


def key_lemma_trials(trials: int, seed: int, max_K: int = 50,
                     rtol: float = 1e-9) -> LemmaCheckReport:
    """Run :func:`check_key_lemma` on ``trials`` random bundles."""
    gen = np.random.default_rng(seed)
    violations, worst = 0, math.inf
    for _ in range(trials):
        rep = check_key_lemma(*random_bundle(gen, max_K), rtol=rtol)
        violations += rep.violations
        worst = min(worst, rep.worst_margin)
    return LemmaCheckReport("key-lemma", trials, violations, worst,
                            notes=f"random bundles, K <= {max_K}, rtol {rtol:g}")


# ---------------------------------------------------------------------------
# Monte Carlo risk
# ---------------------------------------------------------------------------
@dataclass
class RiskReport:
    nu: float
    eps: float
    mode: str
    replications: int
    risk_mean: float
    risk_stderr: float
    risk_median: float
    median_ci: tuple[float, float]
    k_min: int
    k_median: float
    k_max: int
    penalty_constant: float
    benchmark: OracleReport | None = field(default=None, repr=False)
    risks: np.ndarray = field(default=None, repr=False)
    ks: np.ndarray = field(default=None, repr=False)
    k_bounds: np.ndarray = field(default=None, repr=False)  # K_hat (adaptive) or k (oracle)
    lemma_violations: int = 0

    def row(self) -> dict:
        b = self.benchmark
        return {
            "nu": self.nu, "eps": self.eps, "mode": self.mode,
            "replications": self.replications, "risk_mean": self.risk_mean,
            "risk_stderr": self.risk_stderr, "risk_median": self.risk_median,
            "median_lo": self.median_ci[0], "median_hi": self.median_ci[1],
            "k_min": self.k_min, "k_median": self.k_median, "k_max": self.k_max,
            "k_star": b.k_star if b else None, "psi_nu": b.psi_nu if b else None,
            "upsilon": b.upsilon_eps if b else None,
            "psi_diamond": b.psi_diamond if b else None,
            "penalty_constant": self.penalty_constant,
        }


def _oracle_replication(instance, noise, omega, k, tail, seed, i):
    Y, X = simulate_prefix(instance, noise, seed, i, k)
    c = coefficients(Y, X, noise.eps)
    diff = c - instance.coeffs[:k]
    return math.fsum(omega.values(k) * diff * diff) + tail, k, 0, k


def _adaptive_replication(instance, noise, omega, J, constant, seed, i, check_lemma, tails):
    n = min(J, _MIN_PREFIX)
    while True:
        Y, X = simulate_prefix(instance, noise, seed, i, n)
        obs = ObservationSet(Y, X, noise, seed, i)
        try:
            est, trace, bounds = adaptive_estimate(obs, omega, constant, limit=J)
            break
        except PrefixTooShort:
            if n >= J:
                raise
            n = min(J, 2 * n)
    risk = risk_error_sq(est, instance, omega, tails)
    violated = 0
    if check_lemma:
        full = estimate(obs, bounds.k_hat, omega)
        pen = constant * delta_table(AlphaSeq.observed(X), omega, bounds.k_hat)[1] * noise.nu
        violated = check_key_lemma(full, instance, pen, omega, tails=tails).violations
    return risk, trace.k_hat, violated, bounds.k_hat


def _median_interval(x: np.ndarray, z: float = 3.0) -> tuple[float, float]:
    """Distribution-free interval for the median from order statistics."""
    xs = np.sort(x)
    n = xs.size
    half = z * math.sqrt(n) / 2.0
    lo = max(int(math.floor(n / 2.0 - half)), 0)
    hi = min(int(math.ceil(n / 2.0 + half)), n - 1)
    return float(xs[lo]), float(xs[hi])


def mc_risk(instance: ProblemInstance, noise: NoiseLevels, *, replications: int,
            seed: int, mode: str = "oracle", k: int | None = None,
            penalty_constant: float = PEN_HAT_CONSTANT, workers: int = 1,
            check_lemma: bool = False, with_benchmark: bool = True) -> RiskReport:
    """Empirical weighted risk over independent replications.

    Replication ``i`` draws its noise from the stream keyed by ``(seed, i)``
    and results are summed in index order, so the report does not depend on
    ``workers``. ``mode`` is "oracle" (fixed dimension, ``k*`` by default) or
    "adaptive". With ``check_lemma`` the oracle inequality is evaluated on
    every adaptive realization with the data-driven penalty and bound.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    params = instance.params
    omega = params.omega_seq
    J = instance.J
    bench = oracle_report(noise.nu, noise.eps, params) if with_benchmark else None
    if mode == "oracle":
        if k is None:
            k = oracle_k(noise.nu, omega, params.s_seq, params.b_seq).k_star
        k = min(k, J)
        tail = float(tail_sums(instance, omega)[k])
        job = lambda i: _oracle_replication(instance, noise, omega, k, tail, seed, i)
    elif mode == "adaptive":
        tails = tail_sums(instance, omega)
        job = lambda i: _adaptive_replication(instance, noise, omega, J, penalty_constant,
                                              seed, i, check_lemma, tails)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    idx = range(replications)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(job, idx, chunksize=64))
    else:
        out = [job(i) for i in idx]
    risks = np.array([o[0] for o in out])
    ks = np.array([o[1] for o in out], dtype=int)
    k_bounds = np.array([o[3] for o in out], dtype=int)
    viol = int(sum(o[2] for o in out))
    mean = math.fsum(risks) / replications
    if replications > 1:
        var = math.fsum((risks - mean) ** 2) / (replications - 1)
        se = math.sqrt(var / replications)
    else:
        se = 0.0
    return RiskReport(
        nu=noise.nu, eps=noise.eps, mode=mode, replications=replications,
        risk_mean=mean, risk_stderr=se, risk_median=float(np.median(risks)),
        median_ci=_median_interval(risks), k_min=int(ks.min()),
        k_median=float(np.median(ks)), k_max=int(ks.max()),
        penalty_constant=penalty_constant, benchmark=bench, risks=risks, ks=ks,
        k_bounds=k_bounds, lemma_violations=viol,
    )


def theorem22_bound(params: ClassParams, nu: float, eps: float) -> float:
    """``4 (6d + r) max(psi_nu, upsilon_eps)``."""
    rep = oracle_report(nu, eps, params)
    return 4.0 * (6.0 * params.d + params.r) * rep.benchmark


def check_theorem22(params: ClassParams, grid: Sequence[tuple[float, float]], *,
                    replications: int, seed: int, kind: str = "boundary-spread",
                    operator: str = "mid-class", workers: int = 1,
                    J_cap: int | None = None) -> LemmaCheckReport:
    """Empirical risk of the oracle-dimension estimator against the minimax upper bound."""
    viol, worst, rows = 0, math.inf, []
    for nu, eps in grid:
        noise = NoiseLevels(nu, eps)
        J = truncation_length(noise) if J_cap is None else truncation_length(noise, J_cap)
        inst = make_instance(kind, params, J, operator)
        rep = mc_risk(inst, noise, replications=replications, seed=seed, workers=workers)
        bound = theorem22_bound(params, nu, eps)
        lhs = rep.risk_mean - 3.0 * rep.risk_stderr
        viol += lhs > bound
        worst = min(worst, (bound - lhs) / bound)
        rows.append({"nu": nu, "eps": eps, "risk_mean": rep.risk_mean,
                     "risk_stderr": rep.risk_stderr, "bound": bound, "k_star": rep.k_max})
    return LemmaCheckReport("thm22", len(grid), int(viol), worst,
                            notes=f"instance {kind}/{operator}", details={"rows": rows})


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------
@dataclass
class RateFit:
    points: np.ndarray
    slope: float
    intercept: float
    residual_rms: float
    expected_slope: float | None
    regressor: str = "log"

    @property
    def slope_error(self) -> float | None:
        return None if self.expected_slope is None else self.slope - self.expected_slope


def rate_fit(noise_levels, risks, expected_slope: float | None = None,
             regressor: str = "log") -> RateFit:
    """Least-squares line through ``(x, log risk)``.

    ``x`` is ``log(noise)`` for polynomial rates and ``log|log noise|``
    (``regressor="loglog"``) for logarithmic ones.
    """
    lv = np.asarray(noise_levels, dtype=float)
    rk = np.asarray(risks, dtype=float)
    if lv.size < 3 or lv.size != rk.size:
        raise DataError("need at least 3 matching (noise, risk) points")
    if np.any(rk <= 0):
        raise DataError("risks must be positive for a log-log fit")
    if regressor == "log":
        x = np.log(lv)
    elif regressor == "loglog":
        x = np.log(np.abs(np.log(lv)))
    else:
        raise DataError(f"unknown regressor {regressor!r}")
    y = np.log(rk)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(np.column_stack([x, y]), float(slope), float(intercept),
                   float(np.sqrt(np.mean(resid ** 2))), expected_slope, regressor)


# ---------------------------------------------------------------------------
# auxiliary bounds
# ---------------------------------------------------------------------------
def lemma_a1_estimates(a: float, eps: float, R: int, seed: int, stream: int = 0) -> dict:
    """MC means and standard errors of the three moments bounded in the auxiliary lemma."""
    eta = _rng.normal_stream(seed, stream, _rng.STREAM_X, R)
    X = a + math.sqrt(eps) * eta
    keep = X * X >= eps
    ratio = np.divide(a, X, out=np.zeros(R), where=keep)
    samples = {
        "i": np.where(keep, (ratio - 1.0) ** 2, 0.0),
        "ii": (~keep).astype(float),
        "iii": ratio ** 2,
    }
    bounds = {"i": min(1.0, 8.0 * eps / a ** 2), "ii": min(1.0, 4.0 * eps / a ** 2), "iii": 4.0}
    out = {}
    for key, v in samples.items():
        m = math.fsum(v) / R
        se = float(np.std(v, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        out[key] = (m, se, bounds[key])
    return out


def check_lemma_A1(instance: ProblemInstance, js: Sequence[int], eps_grid: Sequence[float],
                   R: int, seed: int, z: float = 3.0) -> LemmaCheckReport:
    """Each MC moment must lie below its bound plus ``z`` standard errors."""
    a_all = instance.eigenvalues
    trials = viol = 0
    worst = math.inf
    rows = []
    for ei, eps in enumerate(eps_grid):
        for j in js:
            est = lemma_a1_estimates(float(a_all[j - 1]), eps, R, seed, stream=1000 * ei + j)
            for key, (m, se, bound) in est.items():
                trials += 1
                margin = bound + z * se - m
                viol += margin < 0
                worst = min(worst, margin)
                rows.append({"j": j, "eps": eps, "item": key, "mean": m, "se": se, "bound": bound})
    return LemmaCheckReport("a1", trials, int(viol), worst, notes=f"R={R}, {z:g} SE",
                            details={"rows": rows})


def check_lemma_A2(nu_grid: Sequence[float], params: ClassParams) -> LemmaCheckReport:
    """``nu * delta_{N+}`` on the mid-class singular values against ``32 d**2``."""
    omega, b, d = params.omega_seq, params.b_seq, params.d
    bound = 32.0 * d * d
    viol, worst, rows = 0, math.inf, []
    for nu in nu_grid:
        N_plus, _ = n_bound(AlphaSeq.upper(b, d), nu, omega)
        if N_plus < 1:
            value = 0.0
        else:
            value = float(nu * delta_table(AlphaSeq.root(b), omega, N_plus)[1][-1])
        viol += value > bound
        worst = min(worst, bound - value)
        rows.append({"nu": nu, "n_plus": N_plus, "value": value, "bound": bound})
    return LemmaCheckReport("a2", len(nu_grid), int(viol), worst,
                            notes="delta evaluated on a = sqrt(b)", details={"rows": rows})


@dataclass
class EventScan:
    eps: np.ndarray
    replications: int
    freq_tilde_c: np.ndarray
    freq_omega_eps_c: np.ndarray
    freq_mho_c: np.ndarray
    sandwich_failures_on_omega_eps: np.ndarray
    bounds_failures_on_tilde: np.ndarray
    clipped: np.ndarray


def event_frequencies(params: ClassParams, eps_grid: Sequence[float], *, R: int, seed: int,
                      nu_of_eps=lambda e: e, kind: str = "boundary-spread",
                      operator: str = "mid-class") -> EventScan:
    eps = np.asarray(eps_grid, dtype=float)
    cols = {k: np.zeros(eps.size) for k in ("tc", "oc", "mc", "sw", "bd", "cl")}
    for g, e in enumerate(eps):
        noise = NoiseLevels(nu_of_eps(e), e)
        J = truncation_length(noise)
        inst = make_instance(kind, params, J, operator)
        for i in range(R):
            obs = simulate(inst, noise, seed, i)
            f: EventFlags = event_flags(obs, inst.log_eigenvalues, params.d, params.b_seq,
                                        params.omega_seq)
            cols["tc"][g] += not f.omega_tilde
            cols["oc"][g] += not f.omega_eps
            cols["mc"][g] += not f.mho
            cols["sw"][g] += f.omega_eps and not f.sandwich_holds
            cols["bd"][g] += f.omega_tilde and not f.bounds_hold
            cols["cl"][g] += f.clipped
    return EventScan(eps, R, cols["tc"] / R, cols["oc"] / R, cols["mc"] / R,
                     cols["sw"], cols["bd"], cols["cl"])


def _nonincreasing_within_error(freq: np.ndarray, R: int, z: float = 3.0) -> bool:
    """Frequencies along a decreasing eps grid may only rise within MC error."""
    se = np.sqrt(np.maximum(freq * (1.0 - freq), 1.0 / R) / R)
    for a, b, sa, sb in zip(freq[:-1], freq[1:], se[:-1], se[1:]):
        if b - a > z * math.hypot(sa, sb):
            return False
    return True


def event_probability_scan(params: ClassParams, eps_grid: Sequence[float], *, R: int,
                           seed: int, **kw) -> LemmaCheckReport:
    """Frequencies of the complements of the events along a decreasing ``eps`` grid."""
    order = np.argsort(eps_grid)[::-1]
    scan = event_frequencies(params, np.asarray(eps_grid)[order], R=R, seed=seed, **kw)
    checks = {
        "tilde": scan.freq_tilde_c, "omega_eps": scan.freq_omega_eps_c, "mho": scan.freq_mho_c,
    }
    viol = sum(not _nonincreasing_within_error(f, R) for f in checks.values())
    implied = {k: (f / scan.eps ** 2).tolist() for k, f in checks.items()}
    worst = min(float(np.min(-np.diff(f))) if f.size > 1 else 0.0 for f in checks.values())
    return LemmaCheckReport(
        "events", len(checks), int(viol), worst,
        notes="implied constants freq/eps^2 are reported, not asserted",
        details={"scan": scan, "implied_constants": implied},
    )
