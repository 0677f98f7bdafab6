"""Matrix-normal model primitives shared by the whole package.

The observation model throughout is an n x p matrix Y whose entries are
independent N(M_ai, 1/N) variables: M is the unknown mean matrix and N
counts the averaged replicates behind Y.  This module holds sampling,
the Gaussian log-likelihood, an SVD wrapper with a fixed sign
convention, and the two loss functions used for risk evaluation.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .rng import OBSERVATIONS, derive_rng

LOG_2PI = float(np.log(2.0 * np.pi))


class NumericError(RuntimeError):
    """A numerical routine failed (non-convergence, singular input, ...)."""


def validate_matrix(M: np.ndarray, name: str = "matrix", require_tall: bool = False) -> np.ndarray:
    """Check a 2-D real matrix with finite entries; return it as float64.

    ``require_tall`` additionally enforces n >= p, which the SVD and the
    singular-value shrinkage machinery assume.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    n, p = M.shape
    if n < 1 or p < 1:
        raise ValueError(f"{name} must have positive dimensions, got {M.shape}")
    if require_tall and n < p:
        raise ValueError(f"{name} must have at least as many rows as columns, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def validate_sample_size(N: int) -> int:
    N = int(N)
    if N < 1:
        raise ValueError(f"sample size N must be >= 1, got {N}")
    return N


def sample_observation(M: np.ndarray, N: int, seed: int) -> np.ndarray:
    """Draw one observation Y with independent entries N(M_ai, 1/N)."""
    M = validate_matrix(M, "M")
    N = validate_sample_size(N)
    rng = derive_rng(seed, OBSERVATIONS)
    return M + rng.standard_normal(M.shape) / np.sqrt(N)


def sample_observations(M: np.ndarray, N: int, n_reps: int, seed: int) -> np.ndarray:
    """Draw a batch of replicate observations, shape (n_reps, n, p).

    The stream is prefix-stable: growing ``n_reps`` extends the batch
    without changing earlier replicates.
    """
    M = validate_matrix(M, "M")
    N = validate_sample_size(N)
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    rng = derive_rng(seed, OBSERVATIONS)
    return M + rng.standard_normal((n_reps,) + M.shape) / np.sqrt(N)


def log_likelihood(Y: np.ndarray, M: np.ndarray, N: int) -> float:
    """Gaussian log-density of Y under mean M and per-entry variance 1/N."""
    Y = validate_matrix(Y, "Y")
    M = validate_matrix(M, "M")
    if Y.shape != M.shape:
        raise ValueError(f"shape mismatch: Y {Y.shape} vs M {M.shape}")
    N = validate_sample_size(N)
    n, p = Y.shape
    resid = Y - M
    return 0.5 * n * p * np.log(N / (2.0 * np.pi)) - 0.5 * N * float(np.sum(resid * resid))


def log_likelihood_batch(Ys: np.ndarray, M: np.ndarray, N: int) -> np.ndarray:
    """Vectorized log-likelihood for a batch of observations (..., n, p)."""
    n, p = Ys.shape[-2:]
    resid = Ys - M
    sq = np.einsum("...ij,...ij->...", resid, resid)
    return 0.5 * n * p * np.log(N / (2.0 * np.pi)) - 0.5 * N * sq


class SvdTriple(NamedTuple):
    """Thin SVD Y = U diag(sigma) V^T with sign-fixed V columns."""

    U: np.ndarray       # (n, p), orthonormal columns
    sigma: np.ndarray   # (p,), nonincreasing, nonnegative
    V: np.ndarray       # (p, p), orthogonal

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def svd(Y: np.ndarray) -> SvdTriple:
    """Thin SVD with a reproducible sign convention.

    The first entry of each V column whose magnitude exceeds 1e-12 is
    made nonnegative (flipping the matching U column together with it),
    so repeated runs and different LAPACK drivers agree on signs.
    """
    Y = validate_matrix(Y, "Y", require_tall=True)
    try:
        U, sigma, Vt = np.linalg.svd(Y, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed to converge for shape {Y.shape}: {exc}") from exc
    V = Vt.T
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
            U[:, j] = -U[:, j]
    return SvdTriple(U=U, sigma=sigma, V=V)


def frobenius_loss(Mhat: np.ndarray, M: np.ndarray) -> float:
    """Squared Frobenius distance between estimate and truth."""
    Mhat = validate_matrix(Mhat, "Mhat")
    M = validate_matrix(M, "M")
    if Mhat.shape != M.shape:
        raise ValueError(f"shape mismatch: {Mhat.shape} vs {M.shape}")
    d = Mhat - M
    return float(np.sum(d * d))


def matrix_quadratic_loss(Mhat: np.ndarray, M: np.ndarray) -> np.ndarray:
    """The p x p loss matrix (Mhat - M)^T (Mhat - M)."""
    Mhat = validate_matrix(Mhat, "Mhat")
    M = validate_matrix(M, "M")
    if Mhat.shape != M.shape:
        raise ValueError(f"shape mismatch: {Mhat.shape} vs {M.shape}")
    d = Mhat - M
    return d.T @ d
