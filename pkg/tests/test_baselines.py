import math

import numpy as np
import pytest

from simbaopt.baselines import Adam, AdamState, MomentumState, SGDMomentum, adam_step, sgd_momentum_step
from simbaopt.linalg import InvalidInputError


def test_adam_first_step_magnitude(rng):
    g = rng.standard_normal(20) * 10
    x, _ = adam_step(np.zeros(20), AdamState.zeros_like(g), g, 1e-3)
    np.testing.assert_allclose(x, -1e-3 * np.sign(g), rtol=1e-6)


def test_adam_zero_grad_noop():
    x = np.array([1.0, -2.0])
    st = AdamState.zeros_like(x)
    for _ in range(10):
        x_new, st = adam_step(x, st, np.zeros(2), 0.1)
        np.testing.assert_array_equal(x_new, x)


def _scalar_adam(x, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = [x]
    for k in range(1, steps + 1):
        g = x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**k)) / (math.sqrt(v / (1 - b2**k)) + eps)
        out.append(x)
    return np.array(out)


def test_adam_on_scalar_quadratic():
    x = np.ones(1)
    st = AdamState.zeros_like(x)
    xs = [1.0]
    for _ in range(100):
        x, st = adam_step(x, st, x.copy(), 0.1)
        xs.append(x[0])
    xs = np.array(xs)
    np.testing.assert_allclose(xs, _scalar_adam(1.0, 0.1, 100), rtol=1e-12, atol=1e-15)
    # |x| falls monotonically until the first sign change; momentum then
    # carries it past zero, but it never climbs back above 0.5
    first_cross = np.flatnonzero(xs < 0)[0]
    assert np.all(np.diff(np.abs(xs[: first_cross])) < 0)
    below = np.flatnonzero(np.abs(xs) < 0.5)[0]
    assert np.all(np.abs(xs[below:]) < 0.5)
    assert abs(xs[-1]) < 0.01


def test_sgd_plain_when_no_momentum(rng):
    x, g = rng.standard_normal((2, 5))
    new, _ = sgd_momentum_step(x, MomentumState.zeros_like(x), g, 0.1, momentum=0.0)
    np.testing.assert_allclose(new, x - 0.1 * g)


def test_sgd_geometric_limit():
    x = np.zeros(1)
    st = MomentumState.zeros_like(x)
    for _ in range(300):
        prev = x
        x, st = sgd_momentum_step(x, st, np.ones(1), 0.01, 0.9)
    assert prev[0] - x[0] == pytest.approx(0.01 / 0.1, rel=1e-9)


def test_sgd_zero_noop():
    x = np.array([3.0])
    new, st = sgd_momentum_step(x, MomentumState.zeros_like(x), np.zeros(1), 0.1)
    np.testing.assert_array_equal(new, x)


def test_bad_gradients():
    x = np.zeros(3)
    with pytest.raises(InvalidInputError):
        adam_step(x, AdamState.zeros_like(x), np.zeros(2), 0.1)
    with pytest.raises(InvalidInputError):
        sgd_momentum_step(x, MomentumState.zeros_like(x), np.array([0, np.inf, 0]), 0.1)


def test_wrappers_keep_state_per_block(rng):
    params = {"a": np.ones(3), "b": np.ones((2, 2))}
    for opt in (Adam(lr=0.01), SGDMomentum(lr=0.01)):
        p = params
        for _ in range(3):
            p, reports = opt.step(p, {k: v.copy() for k, v in p.items()})
            assert reports == []
        assert set(opt.states) == {"a", "b"}
        assert p["b"].shape == (2, 2) and np.all(p["a"] < 1)
