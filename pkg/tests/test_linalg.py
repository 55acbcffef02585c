import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlgp.errors import InvalidInput, NotPositiveDefinite
from mlgp.linalg import (
    block_cholesky_equal,
    block_cholesky_extend,
    chol_logdet,
    cholesky,
    equal_block_matrix,
    mirror_lower,
    solve_lower,
    solve_spd,
    solve_upper_t,
    unvec,
    vec,
)


def random_spd(rng, m, ridge=0.5):
    A = rng.standard_normal((m, m))
    return A @ A.T + ridge * np.eye(m)


def random_equal_blocks(rng, J):
    """V, W with V - W and V + (n-1) W positive definite for any n."""
    R = rng.standard_normal((J, J))
    W = R @ R.T * 0.3
    D = random_spd(rng, J)
    return W + D, W


def test_cholesky_reconstructs():
    rng = np.random.default_rng(0)
    A = random_spd(rng, 6)
    f = cholesky(A)
    assert f.jitter == 0.0
    np.testing.assert_allclose(f.dense(), A, rtol=1e-12, atol=1e-12)
    assert np.allclose(f.L, np.tril(f.L))


def test_cholesky_uses_jitter_on_singular():
    v = np.array([1.0, 2.0, 3.0])
    f = cholesky(np.outer(v, v))
    assert f.jitter > 0.0


def test_cholesky_raises_on_indefinite():
    with pytest.raises(NotPositiveDefinite) as err:
        cholesky(np.diag([1.0, -1.0]), stage="Sigma0")
    assert err.value.stage == "Sigma0"
    assert "Sigma0" in str(err.value)


def test_cholesky_rejects_asymmetric():
    with pytest.raises(InvalidInput):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_zero_matrix_factor():
    assert not np.any(cholesky(np.zeros((3, 3))).L)


def test_logdet_matches_slogdet():
    rng = np.random.default_rng(1)
    A = random_spd(rng, 7)
    assert chol_logdet(cholesky(A)) == pytest.approx(np.linalg.slogdet(A)[1], rel=1e-12)


def test_solves():
    rng = np.random.default_rng(2)
    A = random_spd(rng, 5)
    L = cholesky(A)
    b = rng.standard_normal((5, 2))
    np.testing.assert_allclose(L.L @ solve_lower(L, b), b, atol=1e-12)
    np.testing.assert_allclose(L.L.T @ solve_upper_t(L, b), b, atol=1e-12)
    np.testing.assert_allclose(A @ solve_spd(L, b), b, atol=1e-10)


def test_solve_dimension_mismatch():
    with pytest.raises(InvalidInput):
        solve_lower(np.eye(3), np.ones(2))


def test_vec_unvec_round_trip():
    M = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(vec(M), [0, 3, 1, 4, 2, 5])
    np.testing.assert_array_equal(unvec(vec(M), 2, 3), M)
    with pytest.raises(InvalidInput):
        unvec(np.ones(5), 2, 3)


def test_mirror_lower():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((40, 40))
    expected = np.tril(A) + np.tril(A, -1).T
    np.testing.assert_array_equal(mirror_lower(A.copy(), block=7), expected)


@pytest.mark.parametrize("n", [1, 2, 3, 6])
@pytest.mark.parametrize("J", [1, 4, 8])
def test_block_cholesky_equals_dense(n, J):
    rng = np.random.default_rng(10 * n + J)
    V, W = random_equal_blocks(rng, J)
    blk = block_cholesky_equal(n, V, W)
    dense = cholesky(equal_block_matrix(n, V, W))
    np.testing.assert_allclose(blk.L, dense.L, rtol=1e-9, atol=1e-12)


def test_block_cholesky_zero_blocks():
    f = block_cholesky_equal(3, np.zeros((2, 2)), np.zeros((2, 2)))
    assert f.L.shape == (6, 6) and not np.any(f.L)


def test_block_cholesky_names_failing_step():
    # V + 3W = -0.5 I is indefinite, so some step past the first must fail
    with pytest.raises(NotPositiveDefinite) as err:
        block_cholesky_equal(4, np.eye(2), -0.5 * np.eye(2), jitter_ladder=(0.0,), stage="eta posterior")
    assert "block step" in str(err.value)
    assert "eta posterior" in str(err.value)


def test_block_cholesky_validates_shapes():
    with pytest.raises(InvalidInput):
        block_cholesky_equal(2, np.eye(2), np.eye(3))
    with pytest.raises(InvalidInput):
        block_cholesky_equal(0, np.eye(2), np.eye(2))


def test_extend_equals_dense():
    rng = np.random.default_rng(4)
    M = random_spd(rng, 9)
    LA = cholesky(M[:5, :5])
    ext = block_cholesky_extend(LA, M[5:, :5], M[5:, 5:])
    np.testing.assert_allclose(ext.L, cholesky(M).L, rtol=1e-10, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), J=st.integers(1, 8), seed=st.integers(0, 2 ** 32 - 1))
def test_block_cholesky_property(n, J, seed):
    rng = np.random.default_rng(seed)
    V, W = random_equal_blocks(rng, J)
    L = block_cholesky_equal(n, V, W).L
    full = equal_block_matrix(n, V, W)
    np.testing.assert_allclose(L @ L.T, full, rtol=1e-9, atol=1e-9 * np.abs(full).max())
    assert np.all(np.triu(L, 1) == 0.0)
