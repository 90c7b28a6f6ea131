import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqinv.errors import ConfigError, IndexDomainError
from seqinv.weights import WeightSequence, check_admissible, evaluate


def test_eval_examples():
    assert evaluate(WeightSequence.sobolev(1), 3) == 9
    assert evaluate(WeightSequence.poly_decay(1), 1) == 1
    assert evaluate(WeightSequence.exp_decay(1), 3) == pytest.approx(1.2341e-4, rel=1e-4)
    assert evaluate(WeightSequence.exp_decay(1), 3) == math.exp(-9)


@pytest.mark.parametrize("j", [0, -1, -10])
def test_eval_rejects_nonpositive_index(j):
    with pytest.raises(IndexDomainError):
        WeightSequence.sobolev(1)(j)
    with pytest.raises(IndexDomainError):
        WeightSequence.sobolev(1).log(j)


def test_custom_table_no_extrapolation():
    w = WeightSequence.custom([1.0, 0.5, 0.25])
    assert w(3) == 0.25
    assert w.length == 3
    with pytest.raises(IndexDomainError):
        w(4)


@pytest.mark.parametrize("bad", [[], [1.0, 0.0], [1.0, -2.0], [1.0, float("nan")]])
def test_custom_table_validation(bad):
    with pytest.raises(ConfigError):
        WeightSequence.custom(bad)


def test_unknown_family_and_negative_exponent():
    with pytest.raises(ConfigError):
        WeightSequence("gaussian", 1.0)
    with pytest.raises(ConfigError):
        WeightSequence.sobolev(-1.0)
    with pytest.raises(ConfigError):
        WeightSequence.constant(0.0)


def test_exp_decay_log_scale_past_underflow():
    w = WeightSequence.exp_decay(1)
    assert w(40) == 0.0  # linear scale underflows
    assert w.log(40) == -1600.0
    np.testing.assert_array_equal(w.log_values(3), [-1.0, -4.0, -9.0])


@pytest.mark.parametrize("seq", [
    WeightSequence.sobolev(1.5), WeightSequence.poly_decay(0.75), WeightSequence.exp_decay(0.5),
    WeightSequence.norm(0.3), WeightSequence.constant(2.0), WeightSequence.custom([3.0, 1.0, 2.0]),
])
def test_dict_roundtrip(seq):
    assert WeightSequence.from_dict(seq.to_dict()) == seq


def test_from_dict_errors():
    with pytest.raises(ConfigError):
        WeightSequence.from_dict({"family": "sobolev"})
    with pytest.raises(ConfigError):
        WeightSequence.from_dict({"p": 1})


@given(st.sampled_from(["sobolev", "poly-decay", "exp-decay", "norm"]),
       st.floats(0.0, 3.0), st.integers(1, 60))
def test_log_matches_value(family, q, j):
    w = WeightSequence(family, q)
    v = w(j)
    if v > 0:
        assert math.log(v) == pytest.approx(w.log(j), rel=1e-12, abs=1e-12)


@given(st.floats(0.01, 3.0), st.floats(-5.0, 20.0), st.integers(1, 5000))
def test_first_index_above_matches_scan(q, thr, upper):
    for w in (WeightSequence.sobolev(q), WeightSequence.exp_decay(q)):
        logs = w.log_values(upper)
        hit = np.flatnonzero(logs > thr)
        expected = int(hit[0]) + 1 if hit.size else None
        assert w.first_index_above(thr, upper) == expected


def test_admissible_examples():
    one, sq = WeightSequence.constant(1.0), WeightSequence.sobolev(1)
    assert check_admissible(one, sq, WeightSequence.poly_decay(1), 50).passed
    rep = check_admissible(WeightSequence.sobolev(2), sq, WeightSequence.poly_decay(1), 50)
    assert not rep.passed and rep.ratio_violation == 2
    assert "j=2" in rep.summary()


def test_admissible_exp_decay_is_not_normalized():
    # omega/s == 1 and b decreases, but b_1 = exp(-1) differs from 1
    rep = check_admissible(WeightSequence.sobolev(1), WeightSequence.sobolev(1),
                           WeightSequence.exp_decay(1), 50)
    assert rep.ratio_violation is None and rep.decay_violation is None
    assert rep.normalization_failures == ("b",)


def test_admissible_detects_increasing_b():
    rep = check_admissible(WeightSequence.constant(1.0), WeightSequence.constant(1.0),
                           WeightSequence.custom([1.0, 0.5, 0.7]), 3)
    assert rep.decay_violation == 3


def test_admissible_needs_two_indices():
    one = WeightSequence.constant(1.0)
    with pytest.raises(IndexDomainError):
        check_admissible(one, one, one, 1)


def test_admissible_tolerates_rounding_on_constant_ratio():
    # omega/s computed in log space is exactly flat here
    rep = check_admissible(WeightSequence.norm(0.7), WeightSequence.sobolev(0.7),
                           WeightSequence.poly_decay(2), 10_000)
    assert rep.passed
