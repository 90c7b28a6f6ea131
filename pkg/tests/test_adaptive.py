import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from oracles import delta_ref, m_bound_ref, n_bound_ref, n_circ_ref, select_ref
from seqinv.adaptive import (
    PEN_DET_CONSTANT, PEN_HAT_CONSTANT, SANDWICH_UPPER, AlphaSeq, PrefixTooShort,
    adaptive_estimate, check_condition_L, contrast_and_select, delta, delta_table,
    deterministic_bounds, dimension_bounds, event_flags, k_bound, m_bound, n_bound, n_circ,
    pen_hat, penalty_table, v_eps,
)
from seqinv.errors import IndexDomainError
from seqinv.model import (
    ClassParams, NoiseLevels, ObservationSet, make_instance, simulate, truncation_length,
)
from seqinv.weights import WeightSequence

ONE = WeightSequence.constant(1.0)
MILD = ClassParams.illustration("mild", 1, 1, 0, 1, 2)
SEVERE = ClassParams.illustration("severe", 1, 1, 0, 1, 2)
# largest possible ratio of data-driven to deterministic penalty on Omega_eps:
# 10 * (9/4) * (1 + log(9/4) / log 3)
PEN_RATIO_CEILING = 10 * 2.25 * (1 + math.log(2.25) / math.log(3))


def test_v_eps():
    assert v_eps(1 - 1e-12) == pytest.approx(0.1123, abs=1e-4)
    assert v_eps(1e-6) == pytest.approx(0.0476, abs=1e-4)
    assert v_eps(0.04) == pytest.approx(0.0935, abs=1e-4)


def test_delta_examples():
    assert delta(1, [1.0], ONE) == (1.0, 1.0)
    D, d = delta(3, [1, 1 / 2, 1 / 3], ONE)
    assert D == pytest.approx(9) and d == pytest.approx(27 * math.log(9) / math.log(5))
    assert d == pytest.approx(36.86, abs=5e-3)
    with pytest.raises(ValueError):
        delta(2, [1.0, 0.0], ONE)
    with pytest.raises(IndexDomainError):
        delta(0, [1.0], ONE)


def test_delta_table_infinite_after_zero():
    D, d = delta_table(AlphaSeq.from_values([1.0, 0.0, 1.0]), ONE, 3)
    assert D[0] == 1 and np.all(np.isinf(D[1:])) and np.all(np.isinf(d[1:]))


@given(st.lists(st.floats(1e-3, 10), min_size=1, max_size=40), st.floats(0, 2))
def test_delta_matches_reference(alpha, s):
    w = WeightSequence.norm(s)
    D, d = delta_table(AlphaSeq.from_values(alpha), w, len(alpha))
    for k in range(1, len(alpha) + 1):
        Dr, dr = delta_ref(k, lambda j: alpha[j - 1], w)
        assert D[k - 1] == pytest.approx(Dr, rel=1e-12)
        assert d[k - 1] == pytest.approx(dr, rel=1e-12)


def test_dimension_bound_examples():
    assert n_circ(0.1, ONE) == 10
    alpha = AlphaSeq.from_values(1.0 / np.arange(1, 101))
    assert n_bound(alpha, 0.1, ONE) == (1, "found")
    assert m_bound(alpha, 0.04) == (4, "found")


def test_n_circ_heavy_weights():
    w = WeightSequence.sobolev(1)  # omega_j = j**2 exceeds 1/nu = 100 at j = 11
    assert n_circ(0.01, w) == 10 == n_circ_ref(0.01, w)


@given(st.floats(0.2, 3), st.floats(0, 1.5), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_bounds_match_reference(b, s, nu, eps):
    w = WeightSequence.norm(s)
    bq = WeightSequence.poly_decay(b)
    alpha = AlphaSeq.root(bq)
    a = lambda j: math.sqrt(bq(j))
    assert n_bound(alpha, nu, w)[0] == n_bound_ref(a, nu, w)
    assert m_bound(alpha, eps)[0] == m_bound_ref(a, eps)


def test_bounds_undecided_on_short_prefix():
    X = np.ones(5)
    assert n_bound(AlphaSeq.observed(X), 0.01, ONE, limit=100) == (None, "undecided")
    assert n_bound(AlphaSeq.observed(X), 0.01, ONE, limit=5) == (5, "truncated")
    N, M, K, status = k_bound(AlphaSeq.observed(X), 0.01, 0.01, ONE, limit=100)
    assert K is None and status == "undecided"
    obs = ObservationSet(X, X, NoiseLevels(0.01, 0.01))
    with pytest.raises(PrefixTooShort):
        dimension_bounds(obs, ONE, limit=100)


def test_pen_hat_examples():
    obs = ObservationSet([0.0], [1.0], NoiseLevels(0.01, 0.01))
    assert pen_hat(obs, 0.01, 1, ONE) == pytest.approx(600 * 0.01)
    obs = ObservationSet([0.0] * 3, [1.0, 0.5, 0.25], NoiseLevels(0.01, 0.01))
    expected = 600 * 0.01 * 48 * math.log(16) / math.log(5)
    assert pen_hat(obs, 0.01, 3, ONE) == pytest.approx(expected, rel=1e-13)
    with pytest.raises(IndexDomainError):
        pen_hat(obs, 0.01, 4, ONE)


def test_penalty_nondecreasing():
    X = simulate(make_instance("boundary-spread", MILD, 200), NoiseLevels(1e-3, 1e-3), 0).X
    pen = penalty_table(AlphaSeq.observed(X), 1e-3, ONE, 200).pen
    assert np.all(np.diff(pen) >= 0)


def test_contrast_examples():
    t = contrast_and_select([0.7], [0.3])
    assert t.k_hat == 1 and t.contrast[0] == pytest.approx(-0.3)
    t = contrast_and_select([0.5, 0.5, 0.5], [0.1, 0.2, 0.4])
    assert t.k_hat == 1 and np.allclose(t.penalized, 0.0)
    S, pen = [0.5, 0.6, 1.4], [0.1, 0.2, 0.4]
    k_ref, crit = select_ref(S, pen)
    t = contrast_and_select(S, pen)
    assert t.k_hat == k_ref
    np.testing.assert_allclose(t.penalized, crit, rtol=1e-14)


def test_contrast_rejects_bad_penalties():
    with pytest.raises(ValueError):
        contrast_and_select([0.0, 1.0], [0.2, 0.1])
    with pytest.raises(IndexDomainError):
        contrast_and_select([0.0, 1.0], [0.2])


@given(st.integers(1, 50), st.integers(0, 2**32 - 1), st.booleans())
def test_sweep_matches_double_loop(K, seed, dyadic):
    g = np.random.default_rng(seed)
    if dyadic:
        # values on a coarse dyadic grid make exact ties common and exact
        S = np.cumsum(g.integers(0, 3, K)) / 4.0
        pen = np.cumsum(g.integers(0, 3, K)) / 8.0
    else:
        S = np.cumsum(g.exponential(size=K))
        pen = np.cumsum(g.exponential(size=K)) * g.uniform(0.01, 10)
    k_ref, crit = select_ref(list(S), list(pen))
    t = contrast_and_select(S, pen)
    assert t.k_hat == k_ref
    np.testing.assert_allclose(t.penalized, crit, rtol=1e-12, atol=1e-12)


def _stub(inst, nu, eps):
    a = inst.eigenvalues
    return ObservationSet(a * inst.coeffs, a.copy(), NoiseLevels(nu, eps))


def test_adaptive_noise_free_single_coefficient():
    inst = make_instance("boundary-single", MILD, 100)
    est, trace, bounds = adaptive_estimate(_stub(inst, 0.01, 0.01), MILD.omega_seq)
    assert trace.k_hat == 1 and est.coeffs[0] == pytest.approx(1.0)
    assert 1 <= trace.k_hat <= bounds.k_hat


def test_adaptive_golden_value():
    noise = NoiseLevels(1e-3, 1e-3)
    inst = make_instance("boundary-spread", MILD, truncation_length(noise))
    est, trace, bounds = adaptive_estimate(simulate(inst, noise, 42, 0), MILD.omega_seq)
    assert (trace.k_hat, bounds.k_hat) == (1, 5)
    assert est.coeffs.tolist() == [0.7479599486666934]


def test_adaptive_prefix_matches_full():
    noise = NoiseLevels(1e-4, 1e-4)
    inst = make_instance("boundary-spread", MILD, truncation_length(noise))
    obs = simulate(inst, noise, 5, 3)
    full = adaptive_estimate(obs, MILD.omega_seq)
    n = 64
    while True:
        part = ObservationSet(obs.Y[:n], obs.X[:n], noise)
        try:
            short = adaptive_estimate(part, MILD.omega_seq, limit=obs.J)
            break
        except PrefixTooShort:
            n *= 2
    assert short[1].k_hat == full[1].k_hat and short[2].k_hat == full[2].k_hat
    np.testing.assert_array_equal(short[0].coeffs, full[0].coeffs)


def test_event_flags_exact_operator():
    # flat spectrum, so a_j**2 >= eps at every index
    params = ClassParams(1.0, 2.0, WeightSequence.sobolev(1), ONE, ONE)
    noise = NoiseLevels(1e-3, 1e-3)
    inst = make_instance("boundary-spread", params, truncation_length(noise))
    f = event_flags(_stub(inst, 1e-3, 1e-3), inst.log_eigenvalues, params.d,
                    params.b_seq, params.omega_seq)
    assert f.omega_eps and f.omega_tilde and f.mho and f.sandwich_holds and f.bounds_hold
    assert f.pen_ratio_min == pytest.approx(PEN_HAT_CONSTANT / PEN_DET_CONSTANT)


@pytest.mark.parametrize("params", [MILD, SEVERE])
def test_event_flags_exact_decaying_operator(params):
    noise = NoiseLevels(1e-3, 1e-3)
    inst = make_instance("boundary-spread", params, truncation_length(noise))
    f = event_flags(_stub(inst, 1e-3, 1e-3), inst.log_eigenvalues, params.d,
                    params.b_seq, params.omega_seq)
    assert f.omega_tilde and f.mho
    # Omega_eps also asks X_j**2 >= eps up to M+, which decaying a_j violate
    m = min(f.m_plus, inst.J)
    assert f.omega_eps == bool(np.all(inst.eigenvalues[:m] ** 2 >= noise.eps))


def test_event_flags_doubled_first_value():
    noise = NoiseLevels(1e-3, 1e-3)
    inst = make_instance("boundary-spread", MILD, truncation_length(noise))
    obs = _stub(inst, 1e-3, 1e-3)
    X = obs.X.copy()
    X[0] *= 2
    f = event_flags(ObservationSet(obs.Y, X, obs.noise), inst.log_eigenvalues, 2.0,
                    MILD.b_seq, MILD.omega_seq)
    assert not f.omega_tilde


_class_draw = st.tuples(
    st.sampled_from(["mild", "severe"]), st.floats(0.5, 3), st.floats(0.2, 1.0),
    st.floats(1.0, 4.0), st.floats(1e-4, 0.3), st.floats(1e-4, 0.3), st.integers(0, 2**32 - 1),
)


def _draw_operator(draw):
    fam, p, b, d, nu, eps, seed = draw
    params = ClassParams.illustration(fam, p, b, 0, 1, d)
    g = np.random.default_rng(seed)
    J = truncation_length(NoiseLevels(nu, eps))
    log_a = 0.5 * (params.b_seq.log_values(J) + g.uniform(-math.log(d), math.log(d), J))
    return params, NoiseLevels(nu, eps), log_a, g


@given(_class_draw)
def test_dimension_bound_is_bracketed_on_tilde_event(draw):
    params, noise, log_a, g = _draw_operator(draw)
    X = np.exp(log_a) * (1 + g.uniform(-1 / 3, 1 / 3, log_a.size))
    f = event_flags(ObservationSet(np.zeros_like(X), X, noise), log_a, params.d,
                    params.b_seq, params.omega_seq)
    assert f.omega_tilde
    assert f.k_minus <= f.k_hat <= f.k_plus


@given(_class_draw)
def test_penalty_ratio_range_on_omega_eps(draw):
    params, noise, log_a, g = _draw_operator(draw)
    X = np.exp(log_a) / g.uniform(0.5, 1.5, log_a.size)
    f = event_flags(ObservationSet(np.zeros_like(X), X, noise), log_a, params.d,
                    params.b_seq, params.omega_seq)
    assume(f.omega_eps and not math.isnan(f.pen_ratio_min))
    assert f.pen_ratio_min >= 1.0
    assert f.pen_ratio_max <= PEN_RATIO_CEILING * (1 + 1e-12)


def test_penalty_sandwich_upper_factor_can_fail():
    # a_j = 1/j and X_2 just above a_2 * 2/3 lie in Omega_eps, yet the data-driven
    # penalty exceeds SANDWICH_UPPER times the deterministic one at k = 2
    J = 1000
    log_a = -np.log(np.arange(1, J + 1.0))
    X = np.exp(log_a)
    X[1] = 0.334
    obs = ObservationSet(np.zeros(J), X, NoiseLevels(1e-3, 1e-6))
    f = event_flags(obs, log_a, 2.0, MILD.b_seq, MILD.omega_seq)
    assert f.omega_eps and not f.sandwich_holds
    D = 1 / 0.334 ** 2
    expected = 10 * (2 * D * math.log(D) / math.log(4)) / 8
    assert f.pen_ratio_max == pytest.approx(expected, rel=1e-12)
    assert SANDWICH_UPPER < f.pen_ratio_max <= PEN_RATIO_CEILING


def test_condition_L_grid():
    rep = check_condition_L(MILD.b_seq, 2.0, [1e-2, 1e-1, 1e-3])
    np.testing.assert_array_equal(rep.eps, [1e-1, 1e-2, 1e-3])
    for e, m, lv in zip(rep.eps, rep.m_plus, rep.log_values):
        bm = (m + 1.0) ** -2
        ref = -7 * math.log(e) - 0.5 * math.log(bm) - bm / (72 * e * 2.0)
        assert lv == pytest.approx(ref, rel=1e-12)
    # at desk-scale eps the eps**-7 factor dominates and L keeps growing
    assert rep.divergent


def test_condition_L_constant_b():
    rep = check_condition_L(WeightSequence.constant(1.0), 2.0, [1e-1, 1e-2, 1e-3, 1e-4])
    # the exponential factor eventually wins when b does not decay
    assert not rep.divergent
    assert rep.log_values[-1] < rep.log_values[0]
