import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irlgen.numerics import (AdamState, RngStream, adam_step, clip_by_global_norm, finite_diff_grad,
                             global_norm, log_softmax, softmax)

# softmax([1, 2, 3]) evaluated with 50-digit decimal arithmetic
SOFTMAX_123 = [0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953]

finite = st.floats(-50, 50, allow_nan=False)


def test_softmax_uniform():
    np.testing.assert_allclose(softmax([0, 0, 0, 0]), [0.25] * 4, atol=1e-15)


@pytest.mark.parametrize("c", [-1e3, -3.5, 0.0, 7.0, 1e3])
def test_softmax_exp_ratio(c):
    np.testing.assert_allclose(softmax([c, c + math.log(3)]), [0.25, 0.75], atol=1e-12)


def test_softmax_high_precision_value():
    np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]), SOFTMAX_123, rtol=0, atol=1e-12)


def test_softmax_errors():
    with pytest.raises(ValueError):
        softmax([])
    with pytest.raises(FloatingPointError):
        softmax([1.0, np.nan])
    with pytest.raises(FloatingPointError):
        softmax([np.inf, 0.0])


@given(st.lists(finite, min_size=1, max_size=12), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(xs, c):
    p = softmax(xs)
    assert abs(p.sum() - 1) <= 1e-12
    assert np.all(p > 0)
    np.testing.assert_allclose(softmax(np.array(xs) + c), p, atol=1e-12)
    assert p[int(np.argmax(xs))] == p.max()


def test_log_softmax_mask():
    lp = log_softmax(np.array([[5.0, 1.0, 1.0]]), np.array([False, True, True]))
    assert lp[0, 0] == -np.inf
    np.testing.assert_allclose(lp[0, 1:], [math.log(0.5)] * 2)


def test_adam_zero_grad_is_identity():
    p = {"a": np.array([[1.0, -2.0]]), "b": np.array([[3.0]])}
    s = AdamState.zeros(p)
    for t in range(1, 4):
        p2, s = adam_step(p, {k: np.zeros_like(v) for k, v in p.items()}, s, 0.01)
        assert s.t == t
        for k in p:
            np.testing.assert_array_equal(p2[k], p[k])


def test_adam_first_step_moves_by_lr():
    p = {"x": np.array([[0.0]])}
    p2, s = adam_step(p, {"x": np.array([[1.0]])}, AdamState.zeros(p), 0.005)
    assert abs(p2["x"][0, 0] - 0.005) < 1e-9
    assert s.t == 1


def test_adam_two_steps_match_scalar_recurrence():
    # frozen from a hand-written scalar Adam recurrence (grad +1, lr 0.005)
    p = {"x": np.array([[0.0]])}
    s = AdamState.zeros(p)
    for expected in (0.004999999950000004, 0.009999999899999973):
        p, s = adam_step(p, {"x": np.array([[1.0]])}, s, 0.005)
        assert abs(p["x"][0, 0] - expected) < 1e-15


def test_adam_shape_mismatch():
    p = {"x": np.zeros((1, 2))}
    with pytest.raises(ValueError):
        adam_step(p, {"x": np.zeros((2, 1))}, AdamState.zeros(p), 0.1)
    with pytest.raises(ValueError):
        adam_step(p, {"y": np.zeros((1, 2))}, AdamState.zeros(p), 0.1)


def test_adam_is_pure():
    p = {"x": np.array([[1.0]])}
    s = AdamState.zeros(p)
    adam_step(p, {"x": np.array([[2.0]])}, s, 0.1)
    assert p["x"][0, 0] == 1.0 and s.t == 0 and s.m["x"][0, 0] == 0.0


def test_finite_diff_quadratic():
    g = finite_diff_grad(lambda p: float(np.sum(p["p"] ** 2)), {"p": np.array([[1.0, 2.0]])}, 1e-5)
    np.testing.assert_allclose(g["p"], [[2.0, 4.0]], atol=1e-8)


def test_finite_diff_constant():
    g = finite_diff_grad(lambda p: 3.0, {"p": np.array([[1.0, 2.0]])}, 1e-5)
    np.testing.assert_allclose(g["p"], 0.0, atol=1e-9)


def test_finite_diff_log_softmax():
    g = finite_diff_grad(lambda p: float(np.log(softmax(p["p"][0]))[0]), {"p": np.zeros((1, 2))}, 1e-5)
    np.testing.assert_allclose(g["p"], [[0.5, -0.5]], atol=1e-7)


def test_finite_diff_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        finite_diff_grad(lambda p: float("nan"), {"p": np.zeros((1, 1))})


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_finite_diff_exact_on_quadratics(a, x):
    a, x = np.array(a), np.array([x])
    f = lambda p: float(np.sum(a * p["x"][0] ** 2) + np.sum(a * p["x"][0]) + 1.0)  # noqa: E731
    g = finite_diff_grad(f, {"x": x}, 1e-4)
    np.testing.assert_allclose(g["x"][0], 2 * a * x[0] + a, atol=1e-7)


def test_clip_by_global_norm():
    g = {"a": np.array([[3.0]]), "b": np.array([[4.0]])}
    c = clip_by_global_norm(g, 1.0)
    assert abs(global_norm(c) - 1.0) < 1e-12
    assert clip_by_global_norm(g, None) is g or global_norm(clip_by_global_norm(g, None)) == 5.0


def test_rng_stream_determinism_and_independence():
    a = RngStream(7, ("x", 1)).uniform(5)
    np.testing.assert_array_equal(a, RngStream(7, ("x", 1)).uniform(5))
    np.testing.assert_array_equal(a, RngStream(7).child("x").child(1).uniform(5))
    assert not np.array_equal(a, RngStream(7, ("x", 2)).uniform(5))
    assert not np.array_equal(a, RngStream(8, ("x", 1)).uniform(5))
    assert not np.array_equal(RngStream(7, ("1",)).uniform(5), RngStream(7, (1,)).uniform(5))


def test_rng_children_are_uncorrelated():
    xs = np.array([RngStream(0, ("c", i)).uniform(1)[0] for i in range(4000)])
    ys = np.array([RngStream(0, ("c", i)).uniform(2)[1] for i in range(4000)])
    assert abs(np.corrcoef(xs, ys)[0, 1]) < 0.06
    assert abs(xs.mean() - 0.5) < 0.02
