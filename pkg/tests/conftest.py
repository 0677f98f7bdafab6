import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_full_rank(rng, n, p, scale=2.0, min_sv=0.3):
    """Random n x p matrix, resampled until comfortably full rank."""
    while True:
        M = scale * rng.standard_normal((n, p))
        if np.linalg.svd(M, compute_uv=False)[-1] > min_sv:
            return M


def random_orthogonal(rng, k):
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.sign(np.diag(R))
