"""Shrinkage priors: log-densities, matrix gradients, matrix Laplacians.

Five prior families on an n x p mean matrix M (all improper, handled as
unnormalized log-densities):

* ``svs``              det(M^T M)^(-(n-p-1)/2), singular-value shrinkage
* ``msvs1``            svs times ||M||_F^(-gamma), added scalar shrinkage
* ``msvs2``            svs times prod_i ||M_.i||^(-gamma_i), added
                       column-wise shrinkage
* ``frobenius_power``  ||M||_F^(-gamma); gamma = np-2 is Stein's prior
                       on the vectorization (config name ``stein``)
* ``column_power``     prod_i ||M_.i||^(-gamma_i), the column factor of
                       msvs2 exposed on its own
* ``uniform``          constant

Log-densities are evaluated through singular values (never an explicit
determinant): batched work uses the eigenvalues of M^T M, which are the
squared singular values and are much cheaper for the small p x p Gram
matrices this package meets, while the scalar entry point goes through
the SVD directly.  Rank deficiency makes the svs family diverge; that is
reported as +inf so samplers can apply their own rejection policy.

The matrix gradient of log pi is the n x p array of first partials; the
matrix Laplacian is the p x p array with entries
sum_a d^2 log pi / dM_ai dM_aj.  Closed forms exist for the two factor
priors; everything else raises UnsupportedOperationError rather than
silently falling back to numerics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import NumericError, validate_matrix

SVS = "svs"
MSVS1 = "msvs1"
MSVS2 = "msvs2"
FROBENIUS_POWER = "frobenius_power"
COLUMN_POWER = "column_power"
UNIFORM = "uniform"

_KINDS = (SVS, MSVS1, MSVS2, FROBENIUS_POWER, COLUMN_POWER, UNIFORM)
_SVS_FAMILY = (SVS, MSVS1, MSVS2)

# Condition-number ceiling past which M^T M is treated as singular.
_COND_LIMIT = 1e12


class UnsupportedOperationError(NotImplementedError):
    """Requested derivative has no closed form for this prior kind."""


class ImproperMarginalWarning(UserWarning):
    """Prior parameters fall outside the proper-marginal window."""


@dataclass(frozen=True)
class PriorModel:
    """A named prior with parameters, bound to a matrix shape.

    Construct through the factory functions (:func:`svs`, :func:`msvs1`,
    ...) or :func:`from_name`; they enforce the shape assumptions and
    warn when parameters leave the window in which the marginal density
    is finite (and the generalized Bayes estimator is well defined).
    """

    kind: str
    n: int
    p: int
    gamma: float = 0.0
    gamma_vec: tuple[float, ...] = field(default=())

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.p)

    @property
    def name(self) -> str:
        if self.kind == FROBENIUS_POWER and self.gamma == self.n * self.p - 2:
            return "stein"
        return self.kind

    def log_density(self, M: np.ndarray) -> float:
        return log_density(self, M)

    def log_density_batch(self, Ms: np.ndarray) -> np.ndarray:
        return log_density_batch(self, Ms)

    def grad_log_density(self, M: np.ndarray) -> np.ndarray:
        return grad_log_density(self, M)

    def matrix_laplacian_log(self, M: np.ndarray) -> np.ndarray:
        return matrix_laplacian_log(self, M)


def _check_shape(n: int, p: int, svs_family: bool) -> None:
    if p < 1 or n < p:
        raise ValueError(f"need n >= p >= 1, got n={n}, p={p}")
    if svs_family and n - p - 1 <= 0:
        raise ValueError(f"singular-value shrinkage priors need n - p - 1 > 0, got n={n}, p={p}")


def svs(n: int, p: int) -> PriorModel:
    """Singular value shrinkage prior det(M^T M)^(-(n-p-1)/2)."""
    _check_shape(n, p, True)
    return PriorModel(SVS, n, p)


def msvs1(n: int, p: int, gamma: float | None = None) -> PriorModel:
    """svs with scalar shrinkage ||M||_F^(-gamma).

    Default gamma = p^2 + p - 2, the risk-optimal choice.  The marginal
    is finite iff 0 <= gamma < p^2 + p; outside that window the prior is
    still evaluable but the posterior mean may not exist, so we warn.
    """
    _check_shape(n, p, True)
    if gamma is None:
        gamma = float(p * p + p - 2)
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if not gamma < p * p + p:
        warnings.warn(
            f"msvs1 with gamma={gamma} has an improper marginal (needs 0 <= gamma < {p*p+p})",
            ImproperMarginalWarning,
            stacklevel=2,
        )
    return PriorModel(MSVS1, n, p, gamma=gamma)


def msvs2(n: int, p: int, gamma_vec=None) -> PriorModel:
    """svs with column-wise shrinkage prod_i ||M_.i||^(-gamma_i).

    Default gamma_i = p - 1 for all i, the risk-optimal choice.  The
    marginal is finite when 0 <= gamma_i <= p for every i; the summed
    bound sum_i gamma_i < p^2 + p also appears in the integrability
    argument and is surfaced as a warning only.
    """
    _check_shape(n, p, True)
    if gamma_vec is None:
        gamma_vec = (float(p - 1),) * p
    if np.isscalar(gamma_vec):
        gamma_vec = (float(gamma_vec),) * p
    gamma_vec = tuple(float(g) for g in gamma_vec)
    if len(gamma_vec) != p:
        raise ValueError(f"gamma_vec must have length p={p}, got {len(gamma_vec)}")
    if any(g < 0 for g in gamma_vec):
        raise ValueError(f"gamma_vec must be nonnegative, got {gamma_vec}")
    if any(g > p for g in gamma_vec):
        warnings.warn(
            f"msvs2 with gamma_vec={gamma_vec} has an improper marginal (needs gamma_i <= {p})",
            ImproperMarginalWarning,
            stacklevel=2,
        )
    # The summed bound sum_i gamma_i < p^2 + p from the integrability
    # argument is implied by the per-coordinate one (sum <= p^2), so only
    # the per-coordinate window is checked.
    return PriorModel(MSVS2, n, p, gamma_vec=gamma_vec)


def frobenius_power(n: int, p: int, gamma: float) -> PriorModel:
    """Scalar shrinkage factor ||M||_F^(-gamma)."""
    _check_shape(n, p, False)
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    return PriorModel(FROBENIUS_POWER, n, p, gamma=gamma)


def stein(n: int, p: int) -> PriorModel:
    """Stein's prior ||M||_F^(2-np) on the vectorization of M."""
    return frobenius_power(n, p, float(n * p - 2))


def column_power(n: int, p: int, gamma_vec) -> PriorModel:
    """Column-wise shrinkage factor prod_i ||M_.i||^(-gamma_i)."""
    _check_shape(n, p, False)
    if np.isscalar(gamma_vec):
        gamma_vec = (float(gamma_vec),) * p
    gamma_vec = tuple(float(g) for g in gamma_vec)
    if len(gamma_vec) != p:
        raise ValueError(f"gamma_vec must have length p={p}, got {len(gamma_vec)}")
    if any(g < 0 for g in gamma_vec):
        raise ValueError(f"gamma_vec must be nonnegative, got {gamma_vec}")
    return PriorModel(COLUMN_POWER, n, p, gamma_vec=gamma_vec)


def uniform(n: int, p: int) -> PriorModel:
    """The flat prior; its generalized Bayes estimator is the MLE."""
    _check_shape(n, p, False)
    return PriorModel(UNIFORM, n, p)


def from_name(name: str, n: int, p: int, gamma: float | None = None, gamma_vec=None) -> PriorModel:
    """Build a prior from its config-file name (svs/msvs1/msvs2/stein/uniform)."""
    name = name.lower()
    if name == "svs":
        return svs(n, p)
    if name == "msvs1":
        return msvs1(n, p, gamma)
    if name == "msvs2":
        return msvs2(n, p, gamma_vec if gamma_vec is not None else gamma)
    if name == "stein":
        return stein(n, p) if gamma is None else frobenius_power(n, p, gamma)
    if name == "uniform":
        return uniform(n, p)
    raise ValueError(f"unknown prior name {name!r} (expected svs, msvs1, msvs2, stein, uniform)")


def multiply(base: PriorModel, factor: PriorModel) -> PriorModel:
    """The product prior base * factor for the supported combinations."""
    if base.shape != factor.shape:
        raise ValueError(f"shape mismatch: {base.shape} vs {factor.shape}")
    if factor.kind == UNIFORM:
        return base
    if base.kind == SVS and factor.kind == FROBENIUS_POWER:
        return msvs1(base.n, base.p, factor.gamma)
    if base.kind == SVS and factor.kind == COLUMN_POWER:
        return msvs2(base.n, base.p, factor.gamma_vec)
    raise ValueError(f"no product form for {base.kind} * {factor.kind}")


# ---------------------------------------------------------------------------
# log-densities


def _log_sigma_batch(Ms: np.ndarray) -> np.ndarray:
    """log singular values of a batch (..., n, p), -inf where zero.

    Uses eigenvalues of the p x p Gram matrix: these are the squared
    singular values, and the symmetric eigensolver is far cheaper than a
    batched SVD on tall thin matrices.  Tiny negative eigenvalues from
    roundoff are clamped to zero.
    """
    K = np.swapaxes(Ms, -1, -2) @ Ms
    lam = np.linalg.eigvalsh(K)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(np.maximum(lam, 0.0))


def log_density_batch(prior: PriorModel, Ms: np.ndarray) -> np.ndarray:
    """Unnormalized log prior density over a batch (..., n, p).

    Returns +inf where the density diverges (rank-deficient M for the
    svs family, zero column / zero matrix for the power factors with a
    positive exponent).
    """
    Ms = np.asarray(Ms, dtype=float)
    if Ms.shape[-2:] != prior.shape:
        raise ValueError(f"matrix shape {Ms.shape[-2:]} does not match prior shape {prior.shape}")
    kind = prior.kind
    n, p = prior.shape

    if kind == UNIFORM:
        return np.zeros(Ms.shape[:-2])

    out = 0.0
    if kind in _SVS_FAMILY:
        # -(n-p-1) * sum_i log sigma_i; +inf at rank deficiency
        out = -(n - p - 1) * np.sum(_log_sigma_batch(Ms), axis=-1)
    if kind in (MSVS1, FROBENIUS_POWER):
        gamma = prior.gamma
        with np.errstate(divide="ignore"):
            log_fro = 0.5 * np.log(np.einsum("...ij,...ij->...", Ms, Ms))
        out = out - gamma * log_fro
    if kind in (MSVS2, COLUMN_POWER):
        gv = np.asarray(prior.gamma_vec)
        with np.errstate(divide="ignore"):
            log_cols = 0.5 * np.log(np.einsum("...ij,...ij->...j", Ms, Ms))
        with np.errstate(invalid="ignore"):
            term = np.where(gv == 0.0, 0.0, -gv * log_cols)
        out = out + np.sum(term, axis=-1)
    return np.asarray(out)


def log_density(prior: PriorModel, M: np.ndarray) -> float:
    """Unnormalized log prior density at a single matrix.

    The svs part is computed from the singular values of M via the SVD.
    """
    M = validate_matrix(M, "M", require_tall=True)
    if M.shape != prior.shape:
        raise ValueError(f"matrix shape {M.shape} does not match prior shape {prior.shape}")
    kind = prior.kind
    n, p = prior.shape
    if kind == UNIFORM:
        return 0.0
    out = 0.0
    if kind in _SVS_FAMILY:
        sig = np.linalg.svd(M, compute_uv=False)
        if np.any(sig == 0.0):
            return float("inf")
        out = -(n - p - 1) * float(np.sum(np.log(sig)))
    if kind in (MSVS1, FROBENIUS_POWER):
        fro2 = float(np.sum(M * M))
        if fro2 == 0.0:
            return float("inf") if prior.gamma > 0 else out
        out -= 0.5 * prior.gamma * np.log(fro2)
    if kind in (MSVS2, COLUMN_POWER):
        col2 = np.sum(M * M, axis=0)
        for g, c in zip(prior.gamma_vec, col2):
            if g > 0 and c == 0.0:
                return float("inf")
            if g > 0:
                out -= 0.5 * g * np.log(c)
    return float(out)


# ---------------------------------------------------------------------------
# gradients


def _gram_solve(M: np.ndarray) -> np.ndarray:
    """M (M^T M)^{-1}, erroring on near-singular Gram matrices."""
    K = M.T @ M
    lam = np.linalg.eigvalsh(K)
    if lam[0] <= 0 or lam[-1] / lam[0] > _COND_LIMIT:
        raise NumericError(
            f"M^T M is numerically singular (eigenvalue range {lam[0]:.3e}..{lam[-1]:.3e})"
        )
    return np.linalg.solve(K, M.T).T


def grad_log_density(prior: PriorModel, M: np.ndarray) -> np.ndarray:
    """Matrix gradient of log pi, shape (n, p).

    Requires full column rank; the column factors additionally require
    their columns to be nonzero.
    """
    M = validate_matrix(M, "M", require_tall=True)
    if M.shape != prior.shape:
        raise ValueError(f"matrix shape {M.shape} does not match prior shape {prior.shape}")
    kind = prior.kind
    n, p = prior.shape
    if kind == UNIFORM:
        return np.zeros_like(M)
    grad = np.zeros_like(M)
    if kind in _SVS_FAMILY:
        grad += -(n - p - 1) * _gram_solve(M)
    if kind in (MSVS1, FROBENIUS_POWER):
        fro2 = float(np.sum(M * M))
        if fro2 == 0.0:
            raise NumericError("gradient undefined at M = 0 for a Frobenius power factor")
        grad += -prior.gamma * M / fro2
    if kind in (MSVS2, COLUMN_POWER):
        col2 = np.sum(M * M, axis=0)
        gv = np.asarray(prior.gamma_vec)
        if np.any((col2 == 0.0) & (gv > 0)):
            raise NumericError("gradient undefined at a zero column for a column power factor")
        safe = np.where(col2 > 0, col2, 1.0)
        grad += -M * (gv / safe)
    return grad


def grad_log_density_batch(prior: PriorModel, Ms: np.ndarray) -> np.ndarray:
    """Batched matrix gradient for the closed-form factor priors.

    Only the factor kinds (frobenius_power, column_power, uniform) are
    supported here; they are the ones evaluated in bulk by the paired
    risk machinery.
    """
    Ms = np.asarray(Ms, dtype=float)
    kind = prior.kind
    if kind == UNIFORM:
        return np.zeros_like(Ms)
    if kind == FROBENIUS_POWER:
        fro2 = np.einsum("...ij,...ij->...", Ms, Ms)
        return -prior.gamma * Ms / fro2[..., None, None]
    if kind == COLUMN_POWER:
        col2 = np.einsum("...ij,...ij->...j", Ms, Ms)
        gv = np.asarray(prior.gamma_vec)
        return -Ms * (gv / col2)[..., None, :]
    raise UnsupportedOperationError(f"no batched gradient for prior kind {kind!r}")


# ---------------------------------------------------------------------------
# Laplacians


def matrix_laplacian_log(prior: PriorModel, M: np.ndarray) -> np.ndarray:
    """Matrix Laplacian of log pi: the p x p array sum_a d2/dM_ai dM_aj.

    Closed forms exist for the factor priors:

    * frobenius_power:  -n*gamma/tr(K) I_p + 2*gamma/tr(K)^2 K
    * column_power:     -(n-2) D,  D = diag(gamma_i / ||M_.i||^2)
    * uniform:          0

    Other kinds raise UnsupportedOperationError.
    """
    M = validate_matrix(M, "M", require_tall=True)
    if M.shape != prior.shape:
        raise ValueError(f"matrix shape {M.shape} does not match prior shape {prior.shape}")
    n, p = prior.shape
    kind = prior.kind
    if kind == UNIFORM:
        return np.zeros((p, p))
    if kind == FROBENIUS_POWER:
        K = M.T @ M
        trK = float(np.trace(K))
        if trK == 0.0:
            raise NumericError("matrix Laplacian undefined at M = 0")
        return -n * prior.gamma / trK * np.eye(p) + 2.0 * prior.gamma / trK**2 * K
    if kind == COLUMN_POWER:
        col2 = np.sum(M * M, axis=0)
        gv = np.asarray(prior.gamma_vec)
        if np.any((col2 == 0.0) & (gv > 0)):
            raise NumericError("matrix Laplacian undefined at a zero column")
        safe = np.where(col2 > 0, col2, 1.0)
        return -(n - 2.0) * np.diag(gv / safe)
    raise UnsupportedOperationError(
        f"no closed-form matrix Laplacian for prior kind {kind!r}; "
        "use trace_laplacian_log(..., allow_finite_difference=True) for the trace"
    )


def trace_laplacian_log(prior: PriorModel, M: np.ndarray, allow_finite_difference: bool = False):
    """tr of the matrix Laplacian of log pi, i.e. the plain Laplacian.

    Returns ``(value, used_finite_difference)``.  Kinds without a closed
    form fall back to a finite-difference Laplacian of the log-density
    only when explicitly allowed, and the flag reports that.
    """
    try:
        return float(np.trace(matrix_laplacian_log(prior, M))), False
    except UnsupportedOperationError:
        if not allow_finite_difference:
            raise
    from .numdiff import laplacian_fd

    value = laplacian_fd(lambda X: log_density(prior, X), M)
    return float(value), True


def laplacian_density_closed_form(prior: PriorModel, M: np.ndarray) -> float:
    """Laplacian of the prior density itself (not of its log).

    Closed forms:

    * svs:    0 (the density is harmonic away from rank deficiency)
    * msvs1:  gamma (gamma + np - 2p^2 - 2p + 2) ||M||_F^{-2} pi(M)
    * msvs2:  gamma (gamma + n - 2p) (sum_i ||M_.i||^{-2}) pi(M),
              only for a common shrinkage weight gamma_1 = ... = gamma_p

    The sign of the returned value is what the superharmonicity-based
    minimaxity windows inspect.
    """
    M = validate_matrix(M, "M", require_tall=True)
    n, p = prior.shape
    kind = prior.kind
    if kind == SVS:
        return 0.0
    if kind == MSVS1:
        gamma = prior.gamma
        if gamma == 0.0:
            return 0.0
        fro2 = float(np.sum(M * M))
        if fro2 == 0.0:
            raise NumericError("Laplacian undefined at M = 0")
        coef = gamma * (gamma + n * p - 2 * p * p - 2 * p + 2)
        return coef / fro2 * float(np.exp(log_density(prior, M)))
    if kind == MSVS2:
        gv = set(prior.gamma_vec)
        if len(gv) != 1:
            raise UnsupportedOperationError(
                "closed-form Laplacian of msvs2 requires a common gamma across columns"
            )
        gamma = prior.gamma_vec[0]
        if gamma == 0.0:
            return 0.0
        col2 = np.sum(M * M, axis=0)
        if np.any(col2 == 0.0):
            raise NumericError("Laplacian undefined at a zero column")
        coef = gamma * (gamma + n - 2 * p)
        return coef * float(np.sum(1.0 / col2)) * float(np.exp(log_density(prior, M)))
    raise UnsupportedOperationError(f"no closed-form density Laplacian for prior kind {kind!r}")


def invariant_laplacian(
    sigma: np.ndarray,
    df: Callable[[np.ndarray], np.ndarray],
    d2f: Callable[[np.ndarray], np.ndarray],
    n: int,
) -> float:
    """Laplacian of an orthogonally invariant function through its
    singular-value representation.

    For f(X) = f~(sigma(X)) on n x p matrices (n >= p) with supplied
    first partials ``df`` and second partials ``d2f`` of f~, returns

        2 sum_{i<j} (s_i df_i - s_j df_j) / (s_i^2 - s_j^2)
        + (n - p) sum_i df_i / s_i + sum_i d2f_i.

    The cross term divides by s_i^2 - s_j^2, so the singular values must
    be positive and distinct (tolerance 1e-8).
    """
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.size
    if n < p:
        raise ValueError(f"need n >= p, got n={n}, p={p}")
    if np.any(sigma <= 0):
        raise ValueError("singular values must be positive")
    if np.any(np.diff(sigma) > 0):
        raise ValueError("singular values must be nonincreasing")
    gaps = sigma[:-1] - sigma[1:]
    if p > 1 and np.any(np.abs(gaps) < 1e-8):
        raise NumericError("repeated singular values: invariant Laplacian denominator degenerates")
    g = np.asarray(df(sigma), dtype=float)
    h = np.asarray(d2f(sigma), dtype=float)
    cross = 0.0
    for i in range(p):
        for j in range(i + 1, p):
            cross += (sigma[i] * g[i] - sigma[j] * g[j]) / (sigma[i] ** 2 - sigma[j] ** 2)
    return float(2.0 * cross + (n - p) * np.sum(g / sigma) + np.sum(h))
