"""Numeric kit: logsumexp, the flat-parameter net, Adam, clipping, grad_check."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from asaf.errors import NumericalError, ShapeError, TapeError
from asaf.nn import (
    AdamState,
    Mlp,
    adam_step,
    clip_by_global_norm,
    clip_by_value,
    grad_check,
    log_softmax_rows,
    logsumexp,
    logsumexp_rows,
    param_count,
)

finite_vectors = hnp.arrays(
    np.float64,
    st.integers(1, 8),
    elements=st.floats(-50.0, 50.0, allow_nan=False),
)


# ---------------------------------------------------------------- logsumexp

def test_logsumexp_examples():
    assert logsumexp([0.0, 0.0]) == pytest.approx(np.log(2.0), abs=1e-15)
    assert logsumexp([5.0]) == 5.0
    assert logsumexp([np.log(1.0), np.log(2.0), np.log(3.0)]) == pytest.approx(np.log(6.0), abs=1e-14)


def test_logsumexp_does_not_overflow():
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000.0 + np.log(2.0), abs=1e-12)
    assert logsumexp([-1000.0, -1001.0]) == pytest.approx(-1000.0 + np.log1p(np.exp(-1.0)), abs=1e-12)


def test_logsumexp_minus_inf_entries_drop_out():
    assert logsumexp([-np.inf, 0.0]) == 0.0
    assert logsumexp([-np.inf, -np.inf]) == -np.inf


def test_logsumexp_rejects_bad_input():
    with pytest.raises(ValueError):
        logsumexp([])
    with pytest.raises(ShapeError):
        logsumexp(np.zeros((2, 2)))


@given(finite_vectors, st.floats(-100.0, 100.0, allow_nan=False))
def test_logsumexp_shift_invariance(v, c):
    assert abs(logsumexp(v + c) - (logsumexp(v) + c)) < 1e-10


@given(finite_vectors)
def test_logsumexp_bounds(v):
    val = logsumexp(v)
    assert np.max(v) <= val + 1e-12
    assert val <= np.max(v) + np.log(len(v)) + 1e-12


def test_logsumexp_rows_matches_vector_form():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 4))
    rows = logsumexp_rows(a)
    for i in range(5):
        assert rows[i] == pytest.approx(logsumexp(a[i]), abs=1e-14)
    with pytest.raises(ShapeError):
        logsumexp_rows(np.zeros(3))


def test_log_softmax_rows_normalizes():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 3)) * 10.0
    lp = log_softmax_rows(a)
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12)
    # shifting a row by a constant must not change the distribution
    np.testing.assert_allclose(log_softmax_rows(a + 7.0), lp, atol=1e-10)


# ---------------------------------------------------------------- Mlp forward

def test_param_count_examples():
    assert param_count((2, 3)) == 2 * 3 + 3
    assert param_count((4, 64, 64, 2)) == 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2
    assert Mlp((3, 5, 2)).n_params == param_count((3, 5, 2))


def test_forward_hand_example():
    # layout: W1 rows then b1, W2 rows then b2
    params = np.array([1.0, 0.0, 0.0, 1.0,   # W1 = I
                       0.0, -1.0,             # b1
                       1.0, 1.0,              # W2
                       0.5])                  # b2
    net = Mlp((2, 2, 1), params)
    y, _ = net.forward(np.array([0.3, 0.2]))
    assert y[0] == pytest.approx(0.8, abs=1e-15)      # relu kills the second unit
    y, _ = net.forward(np.array([-1.0, 2.0]))
    assert y[0] == pytest.approx(1.5, abs=1e-15)


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(2)
    net = Mlp.init((3, 4, 4, 2), rng)
    x = rng.normal(size=(5, 3))

    h = x
    for layer in range(3):
        z = h @ net.weights(layer).T + net.biases(layer)
        h = z if layer == 2 else np.maximum(z, 0.0)
    y, _ = net.forward(x)
    np.testing.assert_allclose(y, h, atol=1e-12)


def test_forward_batch_and_single_agree():
    rng = np.random.default_rng(3)
    net = Mlp.init((2, 6, 3), rng)
    x = rng.normal(size=(4, 2))
    batch_y, _ = net.forward(x)
    for i in range(4):
        single_y, _ = net.forward(x[i])
        # BLAS may reassociate the row sum, so allow a few ulps
        np.testing.assert_allclose(single_y, batch_y[i], atol=1e-14)


def test_forward_shape_errors():
    net = Mlp((3, 2))
    with pytest.raises(ShapeError):
        net.forward(np.zeros(4))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 2, 3)))


def test_constructor_rejects_bad_sizes_and_params():
    with pytest.raises(ValueError):
        Mlp((3,))
    with pytest.raises(ValueError):
        Mlp((0, 2))
    with pytest.raises(ShapeError):
        Mlp((2, 2), params=np.zeros(5))


# ---------------------------------------------------------------- Mlp backward

def test_backward_hand_example():
    net = Mlp((1, 1, 1), np.array([2.0, 0.5, 3.0, 0.0]))
    y, tape = net.forward(np.array([1.0]))
    assert y[0] == 7.5
    grad = net.backward(tape, np.array([1.0]))
    np.testing.assert_array_equal(grad, [3.0, 3.0, 2.5, 1.0])

    # negative pre-activation: relu blocks everything upstream
    y, tape = net.forward(np.array([-1.0]))
    assert y[0] == 0.0
    grad = net.backward(tape, np.array([1.0]))
    np.testing.assert_array_equal(grad, [0.0, 0.0, 0.0, 1.0])


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 3))
    dy = rng.normal(size=(4, 2))
    shell = Mlp((3, 5, 2))

    def f(theta):
        net = Mlp((3, 5, 2), theta)
        y, tape = net.forward(x)
        return float(np.sum(dy * y)), net.backward(tape, dy)

    assert grad_check(f, Mlp.init((3, 5, 2), rng).params) < 1e-6
    del shell


def test_backward_sums_over_batch():
    rng = np.random.default_rng(5)
    net = Mlp.init((2, 4, 3), rng)
    x = rng.normal(size=(3, 2))
    dy = rng.normal(size=(3, 3))
    _, tape = net.forward(x)
    total = net.backward(tape, dy)
    parts = np.zeros_like(total)
    for i in range(3):
        _, t_i = net.forward(x[i])
        parts += net.backward(t_i, dy[i])
    np.testing.assert_allclose(total, parts, atol=1e-12)


def test_backward_zero_dy_gives_zero_grad():
    rng = np.random.default_rng(6)
    net = Mlp.init((3, 4, 2), rng)
    _, tape = net.forward(rng.normal(size=(2, 3)))
    np.testing.assert_array_equal(net.backward(tape, np.zeros((2, 2))), 0.0)


def test_backward_rejects_stale_tape():
    rng = np.random.default_rng(7)
    net = Mlp.init((2, 3, 1), rng)
    _, tape = net.forward(np.zeros(2))
    net.params = net.params + 0.1
    with pytest.raises(TapeError):
        net.backward(tape, np.ones(1))


def test_backward_dy_shape_checked():
    net = Mlp((2, 2))
    _, tape = net.forward(np.zeros(2))
    with pytest.raises(ShapeError):
        net.backward(tape, np.zeros(3))
    _, tape = net.forward(np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        net.backward(tape, np.zeros((3, 2)))


def test_params_setter_copies_and_checks_shape():
    net = Mlp((2, 2))
    fresh = np.ones(net.n_params)
    net.params = fresh
    fresh[0] = 99.0
    assert net.params[0] == 1.0
    with pytest.raises(ShapeError):
        net.params = np.ones(net.n_params + 1)


def test_copy_is_independent():
    rng = np.random.default_rng(8)
    net = Mlp.init((2, 3, 2), rng)
    dup = net.copy()
    np.testing.assert_array_equal(dup.params, net.params)
    net.params = net.params * 2.0
    assert not np.array_equal(dup.params, net.params)


def test_init_bounds_and_zero_biases():
    rng = np.random.default_rng(9)
    net = Mlp.init((10, 7, 3), rng)
    for layer, fan_in in ((0, 10), (1, 7)):
        bound = 1.0 / np.sqrt(fan_in)
        assert np.all(np.abs(net.weights(layer)) <= bound)
        np.testing.assert_array_equal(net.biases(layer), 0.0)
    again = Mlp.init((10, 7, 3), np.random.default_rng(9))
    np.testing.assert_array_equal(again.params, net.params)


# ---------------------------------------------------------------- Adam

def test_adam_first_step_hand_value():
    # with g = 1 the bias corrections cancel exactly: step = lr / (1 + eps)
    state = AdamState.for_params(np.zeros(1))
    params, state = adam_step(state, np.zeros(1), np.ones(1), lr=0.1)
    assert params[0] == -(0.1 * 1.0) / (1.0 + 1e-8)
    assert state.t == 1


def test_adam_step_is_scale_free():
    # constant gradients of different magnitude give the same trajectory
    # up to the eps regularizer in the denominator
    s1 = AdamState.for_params(np.zeros(1))
    s2 = AdamState.for_params(np.zeros(1))
    p1 = p2 = np.zeros(1)
    for _ in range(5):
        p1, s1 = adam_step(s1, p1, np.full(1, 1e-3), lr=0.01)
        p2, s2 = adam_step(s2, p2, np.full(1, 1e3), lr=0.01)
    np.testing.assert_allclose(p1, p2, rtol=1e-4)


def test_adam_zero_gradient_keeps_params():
    state = AdamState.for_params(np.zeros(3))
    params, state = adam_step(state, np.arange(3.0), np.zeros(3), lr=0.5)
    np.testing.assert_array_equal(params, np.arange(3.0))
    assert state.t == 1


def test_adam_descends_a_quadratic():
    state = AdamState.for_params(np.zeros(1))
    x = np.array([2.0])
    for _ in range(400):
        x, state = adam_step(state, x, 2.0 * x, lr=0.05)
    assert abs(x[0]) < 1e-2


def test_adam_is_functional():
    state = AdamState.for_params(np.zeros(2))
    params = np.ones(2)
    grads = np.ones(2)
    adam_step(state, params, grads, lr=0.1)
    np.testing.assert_array_equal(params, 1.0)
    np.testing.assert_array_equal(state.m, 0.0)
    assert state.t == 0


def test_adam_rejects_bad_input():
    state = AdamState.for_params(np.zeros(2))
    with pytest.raises(ShapeError):
        adam_step(state, np.zeros(3), np.zeros(3), lr=0.1)
    with pytest.raises(NumericalError):
        adam_step(state, np.zeros(2), np.array([1.0, np.nan]), lr=0.1)
    with pytest.raises(NumericalError):
        adam_step(state, np.zeros(2), np.array([1.0, np.inf]), lr=0.1)


# ---------------------------------------------------------------- clipping

def test_clip_by_global_norm():
    np.testing.assert_allclose(clip_by_global_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8], atol=1e-15)
    g = np.array([3.0, 4.0])
    out = clip_by_global_norm(g, 10.0)
    np.testing.assert_array_equal(out, g)
    out[0] = 0.0
    assert g[0] == 3.0  # result is always a fresh array
    with pytest.raises(ValueError):
        clip_by_global_norm(g, 0.0)


def test_clip_by_value():
    np.testing.assert_array_equal(clip_by_value(np.array([-2.0, 0.5, 3.0]), 1.0), [-1.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        clip_by_value(np.zeros(1), -1.0)


@given(hnp.arrays(np.float64, st.integers(1, 6), elements=st.floats(-1e3, 1e3, allow_nan=False)),
       st.floats(1e-3, 1e3))
def test_clip_norm_never_exceeds_threshold(g, thr):
    assert np.linalg.norm(clip_by_global_norm(g, thr)) <= thr * (1.0 + 1e-12)


# ---------------------------------------------------------------- grad_check

def test_grad_check_accepts_correct_gradient():
    def f(x):
        return float(np.sum(x * x)), 2.0 * x

    assert grad_check(f, np.array([1.0, -2.0, 0.5])) < 1e-8


def test_grad_check_flags_wrong_gradient():
    def f(x):
        return float(np.sum(x * x)), 3.0 * x

    assert grad_check(f, np.array([1.0, -2.0, 0.5])) > 0.1


def test_grad_check_rejects_shape_mismatch():
    def f(x):
        return 0.0, np.zeros(x.size + 1)

    with pytest.raises(ShapeError):
        grad_check(f, np.zeros(2))
