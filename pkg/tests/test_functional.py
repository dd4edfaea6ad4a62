import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ltcs.errors import ConfigError, InvalidArgumentError
from ltcs.nn import layer_norm, log_softmax, smelu, smelu_grad, softmax


def smelu_scalar(x, beta):
    # piecewise definition, written out independently of the library
    if x <= -beta:
        return 0.0
    if x >= beta:
        return x
    return (x + beta) ** 2 / (4 * beta)


@pytest.mark.parametrize("x,want", [(-2.0, 0.0), (0.0, 0.25), (2.0, 2.0), (0.5, 0.5625),
                                    (-1.0, 0.0), (1.0, 1.0)])
def test_smelu_examples(x, want):
    assert smelu(x, 1.0) == pytest.approx(want, abs=1e-15)


def test_smelu_rejects_nonpositive_beta():
    with pytest.raises(ConfigError):
        smelu(0.3, 0.0)
    with pytest.raises(ConfigError):
        smelu(0.3, -1.0)


@given(st.floats(-10, 10), st.floats(0.05, 5))
def test_smelu_matches_scalar_formula(x, beta):
    assert smelu(x, beta) == pytest.approx(smelu_scalar(x, beta), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("beta", [0.25, 1.0, 3.0])
@pytest.mark.parametrize("side", [-1, 1])
def test_smelu_value_and_slope_continuous_at_kinks(beta, side):
    x0 = side * beta
    h = 1e-7
    assert smelu(x0 - h, beta) == pytest.approx(smelu(x0 + h, beta), abs=1e-6)
    left = (smelu(x0, beta) - smelu(x0 - h, beta)) / h
    right = (smelu(x0 + h, beta) - smelu(x0, beta)) / h
    assert abs(left - right) < 1e-6
    assert smelu_grad(x0, beta) == pytest.approx(0.0 if side < 0 else 1.0)


def test_smelu_grad_matches_difference():
    xs = np.linspace(-3, 3, 61) + 0.013
    num = (smelu(xs + 1e-6, 1.0) - smelu(xs - 1e-6, 1.0)) / 2e-6
    np.testing.assert_allclose(smelu_grad(xs, 1.0), num, atol=1e-8)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, st.integers(1, 40), elements=finite), finite)
def test_softmax_sums_to_one_and_is_shift_invariant(v, c):
    p = softmax(v)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(v + c), p, rtol=1e-9, atol=1e-15)


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_log_softmax_consistent(v):
    np.testing.assert_allclose(np.exp(log_softmax(v)), softmax(v), rtol=1e-12, atol=1e-300)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    p = softmax([1000.0, 0.0])
    assert p[0] == pytest.approx(1.0) and np.isfinite(p).all()
    np.testing.assert_allclose(softmax([math.log(3), 0.0]), [0.75, 0.25])


def test_softmax_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        softmax([])
    with pytest.raises(InvalidArgumentError):
        softmax([0.0, float("nan")])


def test_layer_norm_example():
    y = layer_norm(np.array([1.0, 2.0, 3.0]), np.ones(3), np.zeros(3), eps=0.0)
    s = math.sqrt(2 / 3)
    np.testing.assert_allclose(y, [-1 / s, 0.0, 1 / s], rtol=1e-12)


def test_layer_norm_constant_vector_maps_to_bias():
    b = np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(layer_norm(np.full(3, 7.0), np.ones(3), b), b)


def test_layer_norm_length_mismatch():
    with pytest.raises(InvalidArgumentError):
        layer_norm(np.ones(3), np.ones(2), np.zeros(3))


@given(arrays(np.float64, st.integers(2, 16), elements=st.floats(-100, 100)))
def test_layer_norm_output_standardized(v):
    if np.ptp(v) < 1e-3:
        return
    y = layer_norm(v, np.ones(len(v)), np.zeros(len(v)), eps=0.0)
    assert abs(y.mean()) < 1e-9
    assert abs(y.var() - 1.0) < 1e-9
