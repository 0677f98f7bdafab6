"""Monte Carlo risk evaluation and asymptotic risk-difference formulas.

Estimator handles follow the batch protocol handle(Ys, N, seed) ->
estimates with Ys of shape (n_reps, n, p); closed forms ignore the
seed, chain-backed estimators derive their streams from it.  Paired
comparisons reuse one replicate stream (and one seed) for both
estimators, so chain-backed pairs also share proposal noise: common
random numbers throughout.

The asymptotic predictors implement the second-order risk-difference
coefficient between the Bayes estimators for pi1*pi2 and for pi1,

    tr( 2 grad(log pi1)^T grad(log pi2)
        + grad(log pi2)^T grad(log pi2) + 2 lap(log pi2) )

(and its p x p matrix-loss analogue without the trace), where grad and
lap are the matrix gradient and matrix Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import priors as priors_mod
from .core import sample_observations, validate_matrix
from .priors import PriorModel, grad_log_density, grad_log_density_batch, matrix_laplacian_log, trace_laplacian_log
from .rng import CONTROL, HAAR, derive_rng, derive_seed

Estimator = Callable[[np.ndarray, int, int], np.ndarray]

SIGMA1 = "sigma1"
SIGMA2 = "sigma2"
PADDED_DIAGONAL = "padded_diagonal"
HAAR_ROTATED = "haar_rotated"


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    std_error: float
    n_reps: int


@dataclass(frozen=True)
class MatrixRiskEstimate:
    mean: np.ndarray        # (p, p)
    std_error: np.ndarray   # (p, p)
    n_reps: int


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.shape[0]
    se = float(np.std(values, axis=0, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(values)), se


def frobenius_risk(
    estimator: Estimator, M: np.ndarray, N: int, n_reps: int, seed: int
) -> RiskEstimate:
    """Monte Carlo Frobenius risk E ||Mhat(Y) - M||_F^2."""
    M = validate_matrix(M, "M")
    Ys = sample_observations(M, N, n_reps, seed)
    Mhats = estimator(Ys, N, derive_seed(seed, 1))
    d = Mhats - M
    losses = np.einsum("rij,rij->r", d, d)
    mean, se = _mean_se(losses)
    return RiskEstimate(mean=mean, std_error=se, n_reps=n_reps)


def matrix_quadratic_risk(
    estimator: Estimator, M: np.ndarray, N: int, n_reps: int, seed: int
) -> MatrixRiskEstimate:
    """Monte Carlo matrix-quadratic risk E (Mhat - M)^T (Mhat - M)."""
    M = validate_matrix(M, "M")
    Ys = sample_observations(M, N, n_reps, seed)
    Mhats = estimator(Ys, N, derive_seed(seed, 1))
    d = Mhats - M
    losses = np.einsum("rki,rkj->rij", d, d)
    mean = losses.mean(axis=0)
    se = losses.std(axis=0, ddof=1) / np.sqrt(n_reps) if n_reps > 1 else np.zeros_like(mean)
    return MatrixRiskEstimate(mean=mean, std_error=se, n_reps=n_reps)


def paired_risk_difference(
    estimator_a: Estimator,
    estimator_b: Estimator,
    M: np.ndarray,
    N: int,
    n_reps: int,
    seed: int,
    control_factor: PriorModel | None = None,
    n_control: int = 200_000,
) -> RiskEstimate:
    """Frobenius-risk difference risk(A) - risk(B) with common random
    numbers: both estimators see the same replicate observations and the
    same derived seed, so chain-backed estimators also share proposal
    noise.

    ``control_factor`` optionally enables a control variate for the
    Bayes-pair case where A and B are the posterior means under
    pi1*pi2 and pi1: the loss difference's leading fluctuation is
    2/N <grad log pi2(Y), Y - M>, whose expectation equals
    2/N^2 E[lap log pi2(Y)] by Stein's identity.  Subtracting the
    observed term and adding back its cheaply estimated expectation
    removes most replicate noise, which the second-order asymptotic
    checks need at large N.
    """
    M = validate_matrix(M, "M")
    Ys = sample_observations(M, N, n_reps, seed)
    est_seed = derive_seed(seed, 1)
    Mhats_a = estimator_a(Ys, N, est_seed)
    Mhats_b = estimator_b(Ys, N, est_seed)
    da = Mhats_a - M
    db = Mhats_b - M
    diffs = np.einsum("rij,rij->r", da, da) - np.einsum("rij,rij->r", db, db)

    if control_factor is None:
        mean, se = _mean_se(diffs)
        return RiskEstimate(mean=mean, std_error=se, n_reps=n_reps)

    grads = grad_log_density_batch(control_factor, Ys)
    g = 2.0 / N * np.einsum("rij,rij->r", grads, Ys - M)
    resid_mean, resid_se = _mean_se(diffs - g)
    # E[g] = 2/N^2 E[tr lap log pi2(Y)], estimated on an independent
    # cheap stream of observations (no chains involved).
    rng = derive_rng(seed, CONTROL)
    Yc = M + rng.standard_normal((n_control,) + M.shape) / np.sqrt(N)
    tr_lap = _trace_laplacian_batch(control_factor, Yc)
    g_mean = 2.0 / N**2 * float(np.mean(tr_lap))
    g_se = 2.0 / N**2 * float(np.std(tr_lap, ddof=1) / np.sqrt(n_control))
    return RiskEstimate(
        mean=resid_mean + g_mean,
        std_error=float(np.hypot(resid_se, g_se)),
        n_reps=n_reps,
    )


def paired_bayes_difference(
    base_prior: PriorModel,
    factor: PriorModel,
    M: np.ndarray,
    N: int,
    n_reps: int,
    seed: int,
    chain_cfg,
    control_variate: bool = True,
    n_control: int = 200_000,
) -> RiskEstimate:
    """Frobenius-risk difference between the Bayes estimators for
    base*factor and base, sharpened for second-order asymptotic checks.

    Runs one chain per replicate targeting the base posterior and
    reads both posterior means off the same retained states, the
    modified one by self-normalized reweighting with the factor
    density.  The two estimates then share every random input, so their
    difference carries almost no chain noise, which two coupled chains
    cannot achieve once their accept decisions diverge.  On top of
    that, the same control variate as in :func:`paired_risk_difference`
    removes the leading replicate fluctuation.
    """
    from .mcmc import run_chains

    M = validate_matrix(M, "M")
    Ys = sample_observations(M, N, n_reps, seed)
    R, n, p = Ys.shape

    sum_plain = np.zeros((R, n, p))
    sum_w = np.zeros(R)
    sum_wM = np.zeros((R, n, p))
    log_ref = factor.log_density_batch(Ys)  # keeps weights O(1)

    def hook(k, states):
        st = states[0]
        logw = factor.log_density_batch(st) - log_ref
        w = np.exp(logw)
        sum_plain[:] += st
        sum_w[:] += w
        sum_wM[:] += w[:, None, None] * st

    result = run_chains(Ys, N, [base_prior], chain_cfg, retained_hook=hook, seed=derive_seed(seed, 1))[0]
    S = chain_cfg.retained_count
    mean_base = sum_plain / S
    mean_mod = sum_wM / sum_w[:, None, None]

    da = mean_mod - M
    db = mean_base - M
    diffs = np.einsum("rij,rij->r", da, da) - np.einsum("rij,rij->r", db, db)
    if not control_variate:
        mean, se = _mean_se(diffs)
        return RiskEstimate(mean=mean, std_error=se, n_reps=n_reps)
    grads = grad_log_density_batch(factor, Ys)
    g = 2.0 / N * np.einsum("rij,rij->r", grads, Ys - M)
    resid_mean, resid_se = _mean_se(diffs - g)
    rng = derive_rng(seed, CONTROL)
    Yc = M + rng.standard_normal((n_control, n, p)) / np.sqrt(N)
    tr_lap = _trace_laplacian_batch(factor, Yc)
    g_mean = 2.0 / N**2 * float(np.mean(tr_lap))
    g_se = 2.0 / N**2 * float(np.std(tr_lap, ddof=1) / np.sqrt(n_control))
    return RiskEstimate(
        mean=resid_mean + g_mean,
        std_error=float(np.hypot(resid_se, g_se)),
        n_reps=n_reps,
    )


def _trace_laplacian_batch(factor: PriorModel, Ys: np.ndarray) -> np.ndarray:
    """tr of the matrix Laplacian of log pi for the factor priors, batched."""
    n, p = factor.shape
    if factor.kind == priors_mod.FROBENIUS_POWER:
        trK = np.einsum("rij,rij->r", Ys, Ys)
        return -factor.gamma * (n * p - 2.0) / trK
    if factor.kind == priors_mod.COLUMN_POWER:
        col2 = np.einsum("rij,rij->rj", Ys, Ys)
        gv = np.asarray(factor.gamma_vec)
        return -(n - 2.0) * np.sum(gv / col2, axis=-1)
    if factor.kind == priors_mod.UNIFORM:
        return np.zeros(Ys.shape[0])
    raise priors_mod.UnsupportedOperationError(
        f"control variate needs a factor prior with closed-form Laplacian, got {factor.kind!r}"
    )


def asymptotic_frobenius_difference(
    prior1: PriorModel,
    factor2: PriorModel,
    M: np.ndarray,
    allow_finite_difference: bool = False,
) -> float:
    """The N^2-scaled limit of risk(Bayes(pi1*pi2)) - risk(Bayes(pi1))
    under the Frobenius loss."""
    M = validate_matrix(M, "M", require_tall=True)
    g1 = grad_log_density(prior1, M)
    g2 = grad_log_density(factor2, M)
    lap_tr, _ = trace_laplacian_log(factor2, M, allow_finite_difference)
    return float(2.0 * np.sum(g1 * g2) + np.sum(g2 * g2) + 2.0 * lap_tr)


def asymptotic_matrix_difference(
    prior1: PriorModel, factor2: PriorModel, M: np.ndarray
) -> np.ndarray:
    """The p x p matrix-quadratic-loss analogue of
    :func:`asymptotic_frobenius_difference` (no trace)."""
    M = validate_matrix(M, "M", require_tall=True)
    g1 = grad_log_density(prior1, M)
    g2 = grad_log_density(factor2, M)
    lap = matrix_laplacian_log(factor2, M)
    return g1.T @ g2 + g2.T @ g1 + g2.T @ g2 + 2.0 * lap


# ---------------------------------------------------------------------------
# risk curves over singular-value grids


@dataclass(frozen=True)
class GridSpec:
    """A one-axis grid of mean matrices indexed by a singular value.

    ``axis`` selects which singular value sweeps the grid; the rest are
    pinned by ``fixed_sigmas`` (for sigma1 these are (sigma2, ..., sigma_p),
    for sigma2 they are (sigma1, sigma3, ...)).  ``padded_diagonal``
    builds M = [diag(sigma); 0]; ``haar_rotated`` builds M = U diag(sigma)
    with a seeded Haar-random column-orthonormal U.
    """

    axis: str
    values: tuple[float, ...]
    fixed_sigmas: tuple[float, ...]
    construction: str = PADDED_DIAGONAL

    def __post_init__(self):
        if self.axis not in (SIGMA1, SIGMA2):
            raise ValueError(f"axis must be {SIGMA1!r} or {SIGMA2!r}, got {self.axis!r}")
        if self.construction not in (PADDED_DIAGONAL, HAAR_ROTATED):
            raise ValueError(f"unknown construction {self.construction!r}")
        if len(self.values) == 0:
            raise ValueError("grid needs at least one value")
        vals = np.asarray(self.values)
        if np.any(vals < 0) or np.any(np.diff(vals) <= 0) and len(vals) > 1:
            if np.any(vals < 0) or np.any(np.diff(vals) <= 0):
                raise ValueError("grid values must be increasing and nonnegative")

    @property
    def p(self) -> int:
        return len(self.fixed_sigmas) + 1

    def sigmas(self, value: float) -> np.ndarray:
        if self.axis == SIGMA1:
            return np.asarray((value,) + self.fixed_sigmas, dtype=float)
        fs = self.fixed_sigmas
        return np.asarray((fs[0], value) + fs[1:], dtype=float)

    def build_mean(self, value: float, n: int, seed: int) -> np.ndarray:
        sig = self.sigmas(value)
        p = sig.size
        if n < p:
            raise ValueError(f"need n >= p, got n={n}, p={p}")
        M = np.zeros((n, p))
        M[:p, :p] = np.diag(sig)
        if self.construction == HAAR_ROTATED:
            U = haar_column_orthonormal(n, p, seed)
            M = U @ np.diag(sig)
        return M


def haar_column_orthonormal(n: int, p: int, seed: int) -> np.ndarray:
    """Seeded Haar-distributed n x p matrix with orthonormal columns."""
    rng = derive_rng(seed, HAAR)
    G = rng.standard_normal((n, p))
    Q, Rr = np.linalg.qr(G)
    return Q * np.sign(np.diag(Rr))


@dataclass
class RiskCurveRow:
    axis_value: float
    estimator: str
    estimate: RiskEstimate
    seed: int


def risk_curve(
    grid: GridSpec,
    estimator_handles: Sequence[Estimator],
    n: int,
    N: int,
    n_reps: int,
    seed: int,
    mle_baseline: bool = False,
) -> list[RiskCurveRow]:
    """Risk of each estimator at each grid value.

    With ``mle_baseline`` the risk is estimated as
    mean(loss - loss_mle) + np/N on common replicates: the MLE loss has
    known expectation np/N, so this is an exact-mean control variate
    that sharply reduces replicate noise for shrinkage estimators.
    """
    from .estimators import ClosedFormEstimator

    rows: list[RiskCurveRow] = []
    mle = ClosedFormEstimator("mle")
    for gi, value in enumerate(grid.values):
        M = grid.build_mean(value, n, seed)
        point_seed = derive_seed(seed, 100 + gi)
        for estimator in estimator_handles:
            name = getattr(estimator, "name", repr(estimator))
            if mle_baseline and name != "mle":
                diff = paired_risk_difference(estimator, mle, M, N, n_reps, point_seed)
                est = RiskEstimate(
                    mean=diff.mean + n * grid.p / N, std_error=diff.std_error, n_reps=n_reps
                )
            else:
                est = frobenius_risk(estimator, M, N, n_reps, point_seed)
            rows.append(RiskCurveRow(axis_value=value, estimator=name, estimate=est, seed=point_seed))
    return rows
