import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqinv.errors import IndexDomainError
from seqinv.estimator import (
    coefficient, coefficients, estimate, projection_bias_sq, projection_errors,
    risk_error_sq, tail_sums,
)
from seqinv.model import ClassParams, NoiseLevels, ObservationSet, ProblemInstance, make_instance
from seqinv.weights import WeightSequence

MILD = ClassParams.illustration("mild", 1, 1, 0, 1, 2)


def _stub(inst, eps=1e-3, nu=1e-3):
    a = inst.eigenvalues
    return ObservationSet(a * inst.coeffs, a.copy(), NoiseLevels(nu, eps))


@pytest.mark.parametrize("Y,X,eps,expected", [
    (0.5, 0.5, 0.25, 1.0), (0.5, 0.1, 0.25, 0.0), (0.0, 0.9, 0.25, 0.0),
])
def test_coefficient_examples(Y, X, eps, expected):
    assert coefficient(Y, X, eps) == expected
    assert coefficients([Y], [X], eps)[0] == expected


def test_coefficients_no_division_warning_on_zero():
    with np.errstate(all="raise"):
        np.testing.assert_array_equal(coefficients([1.0, 2.0], [0.0, 1.0], 0.5), [0.0, 2.0])


def test_noise_free_exact_inversion():
    inst = make_instance("boundary-spread", MILD, 20)
    est = estimate(_stub(inst), 20, MILD.omega_seq)
    np.testing.assert_allclose(est.coeffs, inst.coeffs, rtol=1e-14)
    assert risk_error_sq(est, inst, MILD.omega_seq) == pytest.approx(0.0, abs=1e-28)


def test_estimate_domain():
    inst = make_instance("boundary-spread", MILD, 5)
    obs = _stub(inst)
    for k in (0, 6):
        with pytest.raises(IndexDomainError):
            estimate(obs, k, MILD.omega_seq)
    with pytest.raises(IndexDomainError):
        estimate(obs, 3, MILD.omega_seq).truncate(4)


def test_projection_bias_examples():
    inst = ProblemInstance.from_arrays([0, 1, 0], [1, 1, 1], MILD)
    w = WeightSequence.custom([1, 4, 9])
    assert projection_bias_sq(inst, w, 1) == 4
    assert projection_bias_sq(inst, w, 2) == 0
    spread = make_instance("boundary-spread", MILD, 10)
    w2 = WeightSequence.norm(0.5)
    ref = math.fsum(j * spread.coeffs[j - 1] ** 2 for j in range(3, 11))
    assert projection_bias_sq(spread, w2, 2) == pytest.approx(ref, rel=1e-14)
    assert tail_sums(spread, w2)[2] == pytest.approx(ref, rel=1e-14)


def test_risk_examples():
    inst = ProblemInstance.from_arrays([1.0, -2.0, 0.5], [1, 1, 1], MILD)
    w = WeightSequence.custom([1.0, 2.0, 3.0])
    zero = ObservationSet([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], NoiseLevels(0.1, 0.1))
    est = estimate(zero, 3, w)
    assert risk_error_sq(est, inst, w) == pytest.approx(1 + 8 + 0.75)
    # concrete three-term case, re-summed by hand
    obs = ObservationSet([1.5, -1.0, 2.0], [1.0, 0.5, 4.0], NoiseLevels(0.1, 0.1))
    est = estimate(obs, 2, w)
    # c = (1.5, -2.0); errors 0.5**2 * 1 + 0 * 2, tail 3 * 0.25
    assert risk_error_sq(est, inst, w) == pytest.approx(0.25 + 0.75)
    assert risk_error_sq(est, inst, w, tails=tail_sums(inst, w)) == pytest.approx(1.0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30),
       st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(1e-6, 1.0, exclude_max=True))
def test_risk_decomposes(c_true, Y, eps):
    J = min(len(c_true), len(Y))
    inst = ProblemInstance(np.array(c_true[:J]), np.zeros(J), MILD)
    obs = ObservationSet(Y[:J], np.ones(J), NoiseLevels(0.5, eps))
    w = WeightSequence.sobolev(0.5)
    for k in range(1, J + 1):
        est = estimate(obs, k, w)
        total = risk_error_sq(est, inst, w)
        parts = projection_errors(est, inst, w)[-1] + projection_bias_sq(inst, w, k)
        assert total == pytest.approx(parts, rel=1e-9, abs=1e-9)


def test_prefix_norms_are_cumulative():
    obs = ObservationSet([1.0, 2.0, 3.0], [1.0, 1.0, 2.0], NoiseLevels(0.1, 0.1))
    est = estimate(obs, 3, WeightSequence.sobolev(1))
    np.testing.assert_allclose(est.prefix_norms, [1.0, 1.0 + 16.0, 17.0 + 9.0 * 2.25])
