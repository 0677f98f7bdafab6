import numpy as np
import pytest
from scipy import stats

from shrinklab import core
from conftest import random_orthogonal


def test_sample_observation_mean():
    M = np.array([[1.5, -0.7], [0.2, 3.0], [0.0, 1.0]])
    Ys = core.sample_observations(M, 1, 100_000, seed=11)
    err = abs(Ys[:, 0, 0].mean() - M[0, 0])
    assert err < 4.0 / np.sqrt(100_000)


def test_sample_observation_variance():
    M = np.zeros((3, 2))
    Ys = core.sample_observations(M, 4, 100_000, seed=12)
    var = Ys.var()
    assert abs(var - 0.25) < 0.05 * 0.25


def test_sample_observation_deterministic():
    M = np.ones((4, 2))
    a = core.sample_observation(M, 3, seed=99)
    b = core.sample_observation(M, 3, seed=99)
    assert np.array_equal(a, b)
    c = core.sample_observation(M, 3, seed=100)
    assert not np.array_equal(a, c)


def test_sample_observations_prefix_stable():
    M = np.zeros((3, 2))
    small = core.sample_observations(M, 1, 10, seed=5)
    big = core.sample_observations(M, 1, 25, seed=5)
    assert np.array_equal(small, big[:10])


def test_log_likelihood_zero_residual():
    Y = np.array([[2.0]])
    assert core.log_likelihood(Y, Y, 1) == pytest.approx(-0.5 * np.log(2 * np.pi))


def test_log_likelihood_direct_value():
    Y = np.array([[1.0, 1.0]])
    M = np.array([[0.0, 0.0]])
    assert core.log_likelihood(Y, M, 1) == pytest.approx(-np.log(2 * np.pi) - 1.0)


def test_log_likelihood_matches_entrywise_gaussians(rng):
    Y = rng.standard_normal((4, 2))
    M = rng.standard_normal((4, 2))
    N = 3
    expected = stats.norm.logpdf(Y.ravel(), loc=M.ravel(), scale=1 / np.sqrt(N)).sum()
    assert core.log_likelihood(Y, M, N) == pytest.approx(expected, rel=1e-12)


def test_log_likelihood_shape_mismatch():
    with pytest.raises(ValueError):
        core.log_likelihood(np.zeros((3, 2)), np.zeros((2, 2)), 1)


def test_svd_orthogonal_columns():
    Y = np.zeros((4, 2))
    Y[0, 0] = 2.0
    Y[1, 1] = 3.0
    triple = core.svd(Y)
    assert np.allclose(triple.sigma, [3.0, 2.0])


def test_svd_scaled_identity_block():
    c = 2.5
    Y = np.vstack([c * np.eye(2), np.zeros((3, 2))])
    assert np.allclose(core.svd(Y).sigma, [c, c])


def test_svd_frobenius_identity(rng):
    Y = rng.standard_normal((5, 3))
    triple = core.svd(Y)
    assert abs(np.sum(triple.sigma**2) - np.sum(Y * Y)) < 1e-10


@pytest.mark.parametrize("shape", [(4, 2), (10, 3), (20, 3)])
def test_svd_invariants(shape, rng):
    n, p = shape
    for _ in range(100):
        Y = rng.standard_normal((n, p))
        t = core.svd(Y)
        assert np.allclose(t.U.T @ t.U, np.eye(p), atol=1e-10)
        assert np.allclose(t.V.T @ t.V, np.eye(p), atol=1e-10)
        assert np.all(np.diff(t.sigma) <= 1e-12)
        rel = np.linalg.norm(t.reconstruct() - Y) / np.linalg.norm(Y)
        assert rel < 1e-10
        for j in range(p):
            col = t.V[:, j]
            nz = np.nonzero(np.abs(col) > 1e-12)[0]
            assert col[nz[0]] >= 0


def test_frobenius_loss_identity():
    M = np.arange(6.0).reshape(3, 2)
    assert core.frobenius_loss(M, M) == 0.0


def test_frobenius_loss_counts_entries():
    A = np.ones((2, 3))
    B = np.zeros((2, 3))
    assert core.frobenius_loss(A, B) == 6.0


def test_frobenius_loss_equals_trace_of_matrix_loss(rng):
    A = rng.standard_normal((5, 3))
    B = rng.standard_normal((5, 3))
    assert abs(core.frobenius_loss(A, B) - np.trace(core.matrix_quadratic_loss(A, B))) < 1e-12


def test_frobenius_loss_orthogonal_invariance(rng):
    for _ in range(20):
        A = rng.standard_normal((6, 3))
        B = rng.standard_normal((6, 3))
        Q = random_orthogonal(rng, 6)
        R = random_orthogonal(rng, 3)
        base = core.frobenius_loss(A, B)
        rot = core.frobenius_loss(Q @ A @ R, Q @ B @ R)
        assert abs(base - rot) < 1e-10 * max(1.0, base)


def test_matrix_quadratic_loss_zero_and_identity():
    M = np.ones((4, 2))
    assert np.array_equal(core.matrix_quadratic_loss(M, M), np.zeros((2, 2)))
    D = np.vstack([np.eye(2), np.zeros((2, 2))])
    assert np.allclose(core.matrix_quadratic_loss(D, np.zeros((4, 2))), np.eye(2))


def test_matrix_quadratic_loss_psd(rng):
    A = rng.standard_normal((6, 3))
    B = rng.standard_normal((6, 3))
    eigs = np.linalg.eigvalsh(core.matrix_quadratic_loss(A, B))
    assert np.all(eigs >= -1e-12)
