"""Closed-form shrinkage estimators of the mean matrix.

Four estimators (config names mle / em / mem / js):

* mle:  Y itself.
* em:   Y (I_p - (n-p-1)/N (Y^T Y)^{-1}), the Efron-Morris matrix
        generalization of James-Stein.
* mem:  em with additional scalar shrinkage
        - (p^2+p-2) / (N ||Y||_F^2) I_p inside the bracket.
* js:   the James-Stein estimator (1 - (n-2)/(N ||y||^2)) y for the
        vector case p = 1, n >= 3.

No positive-part truncation anywhere: shrinkage factors can go
negative, matching the closed forms these estimators are defined by.
:func:`sv_shrinkage_form` applies the same estimators through their
per-singular-value shrinkage factors and exists as an independent
implementation path for testing.
"""

from __future__ import annotations

import numpy as np

from .core import NumericError, svd, validate_matrix, validate_sample_size

MLE = "mle"
EM = "em"
MEM = "mem"
JAMES_STEIN = "js"

KINDS = (MLE, EM, MEM, JAMES_STEIN)

_COND_LIMIT = 1e12


def _check_kind(kind: str, n: int, p: int) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown estimator kind {kind!r} (expected one of {KINDS})")
    if kind in (EM, MEM) and n - p - 1 <= 0:
        raise ValueError(f"{kind} requires n - p - 1 > 0, got n={n}, p={p}")
    if kind == JAMES_STEIN:
        if p != 1:
            raise ValueError(f"james-stein requires p = 1, got p={p}")
        if n < 3:
            raise ValueError(f"james-stein requires n >= 3, got n={n}")


def estimate(kind: str, Y: np.ndarray, N: int) -> np.ndarray:
    """Apply a closed-form estimator to a single observation."""
    Y = validate_matrix(Y, "Y")
    N = validate_sample_size(N)
    n, p = Y.shape
    _check_kind(kind, n, p)
    return estimate_batch(kind, Y[None], N)[0]


def estimate_batch(kind: str, Ys: np.ndarray, N: int) -> np.ndarray:
    """Vectorized estimator over a batch of observations (..., n, p)."""
    Ys = np.asarray(Ys, dtype=float)
    n, p = Ys.shape[-2:]
    _check_kind(kind, n, p)
    if kind == MLE:
        return Ys.copy()
    if kind == JAMES_STEIN:
        sq = np.einsum("...ij,...ij->...", Ys, Ys)
        if np.any(sq == 0.0):
            raise NumericError("james-stein undefined at y = 0")
        factor = 1.0 - (n - 2.0) / (N * sq)
        return Ys * factor[..., None, None]

    K = np.swapaxes(Ys, -1, -2) @ Ys
    lam = np.linalg.eigvalsh(K)
    if np.any(lam[..., 0] <= 0) or np.any(lam[..., -1] / np.maximum(lam[..., 0], 1e-300) > _COND_LIMIT):
        raise NumericError("Y^T Y is numerically singular; em/mem estimators undefined")
    # Y (Y^T Y)^{-1} = solve(K, Y^T)^T, batched
    YKinv = np.swapaxes(np.linalg.solve(K, np.swapaxes(Ys, -1, -2)), -1, -2)
    out = Ys - (n - p - 1.0) / N * YKinv
    if kind == MEM:
        fro2 = np.einsum("...ij,...ij->...", Ys, Ys)
        out = out - ((p * p + p - 2.0) / (N * fro2))[..., None, None] * Ys
    return out


def sv_shrinkage_form(Y: np.ndarray, N: int, kind: str) -> np.ndarray:
    """em / mem through their singular-value shrinkage factors.

    Writes Y = U diag(sigma) V^T and rescales each singular value by

        em:   1 - (n-p-1) / (N sigma_i^2)
        mem:  the em factor minus (p^2+p-2) / (N ||Y||_F^2)

    keeping the singular vectors fixed.
    """
    Y = validate_matrix(Y, "Y", require_tall=True)
    N = validate_sample_size(N)
    n, p = Y.shape
    if kind not in (EM, MEM):
        raise ValueError(f"sv_shrinkage_form supports em and mem only, got {kind!r}")
    _check_kind(kind, n, p)
    triple = svd(Y)
    if np.any(triple.sigma == 0.0):
        raise NumericError("zero singular value: shrinkage factors undefined")
    factors = 1.0 - (n - p - 1.0) / (N * triple.sigma**2)
    if kind == MEM:
        factors = factors - (p * p + p - 2.0) / (N * float(np.sum(triple.sigma**2)))
    return (triple.U * (factors * triple.sigma)) @ triple.V.T


class ClosedFormEstimator:
    """Estimator handle with the batch-call protocol used by the risk
    module: handle(Ys, N, seed) -> estimates.  Closed forms ignore the
    seed."""

    def __init__(self, kind: str):
        if kind not in KINDS:
            raise ValueError(f"unknown estimator kind {kind!r}")
        self.kind = kind
        self.name = kind

    def __call__(self, Ys: np.ndarray, N: int, seed: int = 0) -> np.ndarray:
        return estimate_batch(self.kind, Ys, N)

    def __repr__(self) -> str:
        return f"ClosedFormEstimator({self.kind!r})"
