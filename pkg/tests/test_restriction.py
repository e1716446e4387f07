import numpy as np
import pytest
from hypothesis import given, strategies as st

from simbaopt.linalg import InvalidInputError, InvalidParameterError
from simbaopt.restriction import RestrictionOp, guard, prolong, restrict, sample_restriction


def test_full_sampling():
    R = sample_restriction(4, 4, np.random.default_rng(3))
    np.testing.assert_array_equal(R.indices, [0, 1, 2, 3])


def test_sampling_deterministic():
    a = sample_restriction(4, 2, np.random.default_rng(9))
    b = sample_restriction(4, 2, np.random.default_rng(9))
    np.testing.assert_array_equal(a.indices, b.indices)


@pytest.mark.parametrize("q,n", [(4, 5), (4, 0), (3, -1)])
def test_sampling_rejects(q, n):
    with pytest.raises(InvalidParameterError):
        sample_restriction(q, n, 0)


def test_sampling_frequency():
    rng = np.random.default_rng(0)
    counts = np.zeros(10)
    draws = 100_000
    for _ in range(draws):
        counts[sample_restriction(10, 3, rng).indices] += 1
    np.testing.assert_allclose(counts / draws, 0.3, atol=0.01)


def test_op_validation():
    with pytest.raises(InvalidParameterError):
        RestrictionOp(4, np.array([2, 1]))
    with pytest.raises(InvalidParameterError):
        RestrictionOp(4, np.array([0, 4]))
    with pytest.raises(InvalidParameterError):
        RestrictionOp(4, np.array([1, 1]))
    R = RestrictionOp(4, [0, 2])
    with pytest.raises(ValueError):
        R.indices[0] = 3


def test_restrict_and_prolong_examples():
    R = RestrictionOp(4, [0, 2])
    G = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(restrict(R, G), [1.0, 3.0])
    np.testing.assert_array_equal(prolong(R, np.array([5.0, 6.0])), [5.0, 0.0, 6.0, 0.0])
    np.testing.assert_array_equal(prolong(R, restrict(R, G)), [1.0, 0.0, 3.0, 0.0])
    full = RestrictionOp(4, np.arange(4))
    np.testing.assert_array_equal(restrict(full, G), G)


def test_dimension_mismatch():
    R = RestrictionOp(4, [0, 2])
    with pytest.raises(InvalidInputError):
        restrict(R, np.ones(3))
    with pytest.raises(InvalidInputError):
        prolong(R, np.ones(3))


@st.composite
def ops(draw):
    q = draw(st.integers(1, 30))
    n = draw(st.integers(1, q))
    seed = draw(st.integers(0, 2**31))
    d = draw(st.integers(1, 4))
    return sample_restriction(q, n, np.random.default_rng(seed)), d, seed


@given(ops())
def test_operator_identities(case):
    R, d, seed = case
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((R.source_dim, d))
    Y = rng.standard_normal((R.coarse_dim, d))
    # adjoint
    assert np.sum(prolong(R, Y) * G) == pytest.approx(np.sum(Y * restrict(R, G)), abs=1e-12)
    # R P = I
    np.testing.assert_array_equal(restrict(R, prolong(R, Y)), Y)
    # P R is a symmetric idempotent projector
    M = R.matrix()
    PR = M.T @ M
    np.testing.assert_array_equal(PR @ PR, PR)
    np.testing.assert_array_equal(PR, PR.T)
    assert np.linalg.matrix_rank(M.T) == R.coarse_dim
    assert np.linalg.norm(M, 2) == pytest.approx(R.norm)
    assert np.linalg.norm(restrict(R, G)) <= np.linalg.norm(G) + 1e-15


def test_expected_restricted_energy(rng):
    G = rng.standard_normal((20, 3))
    total = np.sum(G**2)
    draws = [np.sum(restrict(sample_restriction(20, 6, rng), G) ** 2) for _ in range(10_000)]
    assert np.mean(draws) == pytest.approx(6 / 20 * total, rel=0.02)


def test_guard_examples():
    R = RestrictionOp(4, [0, 2])
    G = np.array([[1.0], [0.0], [2.0], [0.0]])
    assert guard(R, G, 0.5, 1e-12)
    assert not guard(R, np.array([[0.0], [1.0], [0.0], [3.0]]), 0.5, 1e-12)
    # e larger than the restricted norm fails the second test
    assert not guard(R, G, 0.5, 10.0)


def test_guard_matches_norms(rng):
    for _ in range(50):
        R = sample_restriction(12, 4, rng)
        G = rng.standard_normal((12, 3))
        rg = np.linalg.norm(G[R.indices])
        assert guard(R, G, 0.1, 1e-12) == (rg > 0.1 * np.linalg.norm(G) and rg > 1e-12)


@pytest.mark.parametrize("xi,e", [(0.0, 1.0), (1.0, 1.0), (0.5, 0.0)])
def test_guard_rejects_parameters(xi, e):
    with pytest.raises(InvalidParameterError):
        guard(RestrictionOp(3, [0]), np.ones(3), xi, e)
