"""Autodiff engine: exact-value checks, finite-difference oracles, and
property tests for the core ops."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unite import tensor as T
from unite.tensor import Tensor, NumericError, ShapeError, grad_check


def randt(rng, shape, grad=True):
    return Tensor(rng.normal(size=shape), requires_grad=grad)


small_arrays = st.lists(
    st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=1,
    max_size=12)


# ---------------------------------------------------------------------------
# Construction and basic behavior


def test_tensor_rejects_nonfinite():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        Tensor([np.inf])


def test_tensor_is_float64():
    t = Tensor(np.ones(3, dtype=np.float32))
    assert t.data.dtype == np.float64


def test_backward_requires_scalar():
    t = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (t * t).backward()


def test_grad_accumulates_over_reuse(rng):
    x = randt(rng, (4,))
    y = T.tsum(x * x) + T.tsum(x)
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1, atol=1e-12)


def test_zero_grad_clears():
    x = Tensor([2.0], requires_grad=True)
    T.tsum(x * x).backward()
    assert x.grad is not None
    x.zero_grad()
    assert x.grad is None


def test_detach_breaks_graph(rng):
    x = randt(rng, (3,))
    y = T.tsum(x.detach() * x)
    y.backward()
    np.testing.assert_allclose(x.grad, x.data, atol=1e-12)


# ---------------------------------------------------------------------------
# matmul


def test_matmul_identity():
    i2 = np.eye(2)
    out = T.matmul(Tensor(i2), Tensor(i2))
    np.testing.assert_array_equal(out.data, i2)


def test_matmul_hand_arithmetic():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(T.matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_gradcheck(rng):
    a = randt(rng, (3, 4))
    b = randt(rng, (4, 2))
    w = Tensor(rng.normal(size=(3, 2)))
    err = grad_check(lambda x, y: T.tsum(T.matmul(x, y) * w), [a, b])
    assert err < 1e-6


def test_matmul_batched_gradcheck(rng):
    a = randt(rng, (2, 3, 4))
    b = randt(rng, (2, 4, 2))
    err = grad_check(lambda x, y: T.tsum(T.matmul(x, y)), [a, b])
    assert err < 1e-6


def test_matmul_shape_errors(rng):
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 2, 3))), Tensor(np.ones((5, 3, 2))))


# ---------------------------------------------------------------------------
# softmax


def test_softmax_symmetry():
    out = T.softmax(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, np.full(3, 1 / 3), atol=1e-12)


def test_softmax_stability():
    out = T.softmax(Tensor([1000.0, 0.0, 0.0]))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data, [1.0, 0.0, 0.0], atol=1e-12)


def test_softmax_gradcheck(rng):
    x = randt(rng, (5,))
    w = Tensor(rng.normal(size=(5,)))
    err = grad_check(lambda t: T.tsum(T.softmax(t, axis=-1) * w), [x])
    assert err < 1e-6


@given(small_arrays)
@settings(max_examples=50, deadline=None)
def test_softmax_rows_sum_to_one(values):
    out = T.softmax(Tensor(values)).data
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# layer_norm


def test_layer_norm_constant_input():
    x = Tensor(np.full((2, 5), 3.7))
    out = T.layer_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-6)


def test_layer_norm_two_point():
    out = T.layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)),
                       Tensor(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-5)


def test_layer_norm_gradcheck(rng):
    x = randt(rng, (3, 6))
    g = randt(rng, (6,))
    b = randt(rng, (6,))
    w = Tensor(rng.normal(size=(3, 6)))
    err = grad_check(lambda t, gg, bb: T.tsum(T.layer_norm(t, gg, bb) * w),
                     [x, g, b])
    assert err < 1e-6


# ---------------------------------------------------------------------------
# gelu / relu / exp / log


def test_gelu_values():
    assert T.gelu(Tensor(0.0)).item() == 0.0
    assert abs(T.gelu(Tensor(10.0)).item() - 10.0) < 1e-6
    assert abs(T.gelu(Tensor(-10.0)).item()) < 1e-6
    assert abs(T.gelu(Tensor(1.0)).item() - 0.8413) < 1e-3


def test_gelu_gradcheck(rng):
    x = randt(rng, (7,))
    w = Tensor(rng.normal(size=(7,)))
    err = grad_check(lambda t: T.tsum(T.gelu(t) * w), [x])
    assert err < 1e-6


def test_relu_gradcheck(rng):
    x = randt(rng, (9,)) + 0.5   # keep points off the kink
    err = grad_check(lambda t: T.tsum(T.relu(t) * t), [x])
    assert err < 1e-6


def test_exp_log_roundtrip_gradcheck(rng):
    x = Tensor(np.abs(rng.normal(size=(5,))) + 0.5, requires_grad=True)
    err = grad_check(lambda t: T.tsum(T.log(T.exp(t) + Tensor(1.0))), [x])
    assert err < 1e-6


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_log_of_nonpositive_raises():
    with pytest.raises(NumericError):
        T.log(Tensor([0.0]))


# ---------------------------------------------------------------------------
# l2_norm


def test_l2_norm_345():
    assert T.l2_norm(Tensor([3.0, 4.0])).item() == 5.0


def test_l2_norm_origin_gradient_zero():
    x = Tensor(np.zeros(4), requires_grad=True)
    T.l2_norm(x).backward()
    np.testing.assert_array_equal(x.grad, np.zeros(4))


def test_l2_norm_gradcheck_away_from_origin(rng):
    x = Tensor(rng.normal(size=(6,)) + 2.0, requires_grad=True)
    err = grad_check(lambda t: T.l2_norm(t), [x])
    assert err < 1e-6


def test_l2_norm_axis(rng):
    x = randt(rng, (3, 4))
    out = T.l2_norm(x, axis=1)
    np.testing.assert_allclose(out.data, np.linalg.norm(x.data, axis=1),
                               atol=1e-12)
    err = grad_check(lambda t: T.tsum(T.l2_norm(t, axis=1)), [x])
    assert err < 1e-6


# ---------------------------------------------------------------------------
# dropout


def test_dropout_rate_zero_identity(rng):
    x = randt(rng, (5, 5))
    out = T.dropout(x, 0.0, True, np.random.default_rng(0))
    np.testing.assert_array_equal(out.data, x.data)


def test_dropout_eval_identity(rng):
    x = randt(rng, (5, 5))
    out = T.dropout(x, 0.9, False, np.random.default_rng(0))
    np.testing.assert_array_equal(out.data, x.data)


def test_dropout_survivor_fraction():
    x = Tensor(np.ones(100_000))
    out = T.dropout(x, 0.5, True, np.random.default_rng(7))
    survivors = np.count_nonzero(out.data) / x.data.size
    assert abs(survivors - 0.5) < 0.01


def test_dropout_inverted_scaling():
    x = Tensor(np.ones(100_000))
    out = T.dropout(x, 0.25, True, np.random.default_rng(7))
    kept = out.data[out.data != 0]
    np.testing.assert_allclose(kept, 1.0 / 0.75, atol=1e-12)


def test_dropout_gradcheck(rng):
    x = randt(rng, (4, 4))

    def f(t):
        return T.tsum(T.dropout(t, 0.3, True, np.random.default_rng(123)))

    assert grad_check(f, [x]) < 1e-6


def test_dropout_bad_rate(rng):
    with pytest.raises(ValueError):
        T.dropout(randt(rng, (2,)), 1.0, True, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# shape ops and reductions


def test_reshape_transpose_gradcheck(rng):
    x = randt(rng, (2, 3, 4))
    w = Tensor(rng.normal(size=(4, 3, 2)))
    err = grad_check(
        lambda t: T.tsum(T.transpose(T.reshape(t, (2, 3, 4)), (2, 1, 0)) * w),
        [x])
    assert err < 1e-6


def test_take_gradcheck(rng):
    x = randt(rng, (4, 4))
    err = grad_check(lambda t: T.tsum(T.take(t, 2, axis=0) * T.take(t, 1, axis=1)),
                     [x])
    assert err < 1e-6


def test_stack_gradcheck(rng):
    a, b = randt(rng, (3,)), randt(rng, (3,))
    err = grad_check(lambda x, y: T.tsum(T.stack([x, y]) * T.stack([y, x])),
                     [a, b])
    assert err < 1e-6


def test_sum_mean_axis_gradcheck(rng):
    x = randt(rng, (3, 4, 2))
    err = grad_check(
        lambda t: T.tsum(T.tmean(t, axis=(0, 2), keepdims=True) * T.tsum(t, axis=0)),
        [x])
    assert err < 1e-6


def test_mean_matches_numpy(rng):
    x = randt(rng, (3, 4))
    np.testing.assert_allclose(T.tmean(x, axis=1).data, x.data.mean(axis=1),
                               atol=1e-12)


def test_div_broadcast_gradcheck(rng):
    a = randt(rng, (3, 4))
    b = Tensor(np.abs(rng.normal(size=(3, 1))) + 1.0, requires_grad=True)
    err = grad_check(lambda x, y: T.tsum(T.div(x, y)), [a, b])
    assert err < 1e-6


@given(small_arrays, small_arrays)
@settings(max_examples=50, deadline=None)
def test_add_mul_match_numpy(xs, ys):
    n = min(len(xs), len(ys))
    a, b = np.asarray(xs[:n]), np.asarray(ys[:n])
    np.testing.assert_array_equal((Tensor(a) + Tensor(b)).data, a + b)
    np.testing.assert_array_equal((Tensor(a) * Tensor(b)).data, a * b)
    np.testing.assert_array_equal((Tensor(a) - Tensor(b)).data, a - b)


def test_broadcast_unbroadcast_grad(rng):
    a = randt(rng, (3, 4))
    b = randt(rng, (4,))
    err = grad_check(lambda x, y: T.tsum(x * y + y), [a, b])
    assert err < 1e-6


# ---------------------------------------------------------------------------
# purity / determinism


def test_ops_are_pure(rng):
    x = randt(rng, (6,))
    before = x.data.copy()
    y = T.softmax(x)
    T.tsum(y * y).backward()
    np.testing.assert_array_equal(x.data, before)


def test_identical_seeds_bit_identical():
    def run():
        r = np.random.default_rng(42)
        x = Tensor(r.normal(size=(8, 8)), requires_grad=True)
        out = T.tsum(T.softmax(T.matmul(x, x)) * T.gelu(x))
        out.backward()
        return out.data.copy(), x.grad.copy()

    (v1, g1), (v2, g2) = run(), run()
    assert np.array_equal(v1, v2) and np.array_equal(g1, g2)


# ---------------------------------------------------------------------------
# grad_check harness itself


def test_gradcheck_quadratic_exact(rng):
    x = randt(rng, (3, 4))
    assert grad_check(lambda t: T.tsum(t * t), [x]) < 1e-9


def test_gradcheck_detects_wrong_gradient(rng):
    """Mutation self-test: a deliberately wrong backward must be flagged."""
    x = randt(rng, (5,))

    def broken(t):
        # Forward computes sum(t^2) but routes the graph through a detached
        # copy, so the reported gradient is that of sum(t) instead.
        wrong = t + Tensor(t.data * t.data - t.data)
        return T.tsum(wrong)

    assert grad_check(broken, [x]) > 1e-2
