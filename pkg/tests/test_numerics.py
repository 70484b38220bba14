import math

import mpmath
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from tslab import numerics as tnum

from conftest import VOCAB2, micro_params, rand_features

NEG_INF = float("-inf")

finite_logits = st.lists(
    st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=8
)


def mp_log_sum_exp(values):
    return float(mpmath.log(mpmath.fsum(mpmath.e**mpmath.mpf(v) for v in values)))


def test_log_sum_exp_halves():
    assert tnum.log_sum_exp([math.log(0.5), math.log(0.5)]) == 0.0


def test_log_sum_exp_absorbs_neg_inf():
    assert tnum.log_sum_exp([NEG_INF, 1.25]) == 1.25
    assert tnum.log_sum_exp([NEG_INF, NEG_INF]) == NEG_INF


def test_log_sum_exp_matches_high_precision():
    got = tnum.log_sum_exp([0.0, 1.0, 2.0])
    assert abs(got - mp_log_sum_exp([0.0, 1.0, 2.0])) < 1e-14


@given(finite_logits)
def test_log_sum_exp_permutation_invariant(values):
    # Float addition is not associative, so reordering the inputs may
    # move the sum by an ulp; invariance holds at rounding precision.
    a = tnum.log_sum_exp(values)
    b = tnum.log_sum_exp(sorted(values))
    assert math.isclose(a, b, rel_tol=1e-13, abs_tol=1e-13)


@given(finite_logits)
def test_log_sum_exp_neg_inf_is_neutral(values):
    assert tnum.log_sum_exp(values + [NEG_INF]) == tnum.log_sum_exp(values)


@given(finite_logits)
def test_log_sum_exp_close_to_oracle(values):
    assert abs(tnum.log_sum_exp(values) - mp_log_sum_exp(values)) < 1e-9


def test_softmax_symmetry():
    np.testing.assert_array_equal(
        tnum.stable_softmax(np.array([0.0, 0.0])), [0.5, 0.5]
    )


@given(st.floats(min_value=-1e3, max_value=1e3))
def test_softmax_constant_rows_are_uniform(c):
    out = tnum.stable_softmax(np.full(4, c))
    np.testing.assert_allclose(out, 0.25, rtol=0, atol=1e-15)


def test_softmax_matches_high_precision():
    got = tnum.stable_softmax(np.array([1.0, 2.0, 3.0]))
    denom = mpmath.fsum(mpmath.e**z for z in (1, 2, 3))
    want = [float(mpmath.e**z / denom) for z in (1, 2, 3)]
    np.testing.assert_allclose(got, want, rtol=1e-14)


@given(finite_logits)
def test_softmax_normalizes(values):
    out = tnum.stable_softmax(np.array(values))
    assert (out >= 0).all()
    assert abs(out.sum() - 1.0) < 1e-12


@given(finite_logits, st.floats(min_value=-100, max_value=100))
def test_softmax_shift_invariant(values, shift):
    base = tnum.stable_softmax(np.array(values))
    shifted = tnum.stable_softmax(np.array(values) + shift)
    np.testing.assert_allclose(base, shifted, rtol=0, atol=1e-12)


def test_finite_diff_quadratic():
    grad = tnum.finite_diff_gradient(
        lambda p: float(p[0] * p[0]), np.array([3.0])
    )
    assert abs(grad[0] - 6.0) < 1e-6


def test_finite_diff_constant_function():
    grad = tnum.finite_diff_gradient(lambda p: 7.5, np.arange(4.0))
    np.testing.assert_array_equal(grad, np.zeros(4))


def test_grad_check_on_toy_transducer_ce():
    from tslab import lattice as tlat

    params = micro_params(seed=3, scale=0.5, vocab=VOCAB2)
    feats = rand_features(3, t=3)
    batch = [(feats, ("a", "b"))]

    def loss_fn(flat):
        return tlat.ce_loss_and_grad(params.with_flat(flat), batch).loss

    def analytic(flat):
        return tlat.ce_loss_and_grad(params.with_flat(flat), batch).grad

    report = tnum.grad_check(loss_fn, analytic, params.flatten())
    assert report.max_rel_error < 1e-4
