"""Random-walk Metropolis-Hastings posterior means, vectorized over
replicate observations, plus a self-normalized importance-sampling
oracle for the same posterior mean.

The target is always the posterior p(Y | M) pi(M) with per-entry
observation variance 1/N.  A "chain batch" runs one independent chain
per replicate observation simultaneously, which is what makes Monte
Carlo risk curves affordable: per iteration the batch does a handful of
vectorized numpy operations instead of thousands of scalar ones.

Several priors can ride the same proposal and acceptance-uniform
streams (common random numbers).  Running priors jointly in one call or
separately with the same seed produces bit-identical chains, which is
what the paired risk-difference machinery relies on.

Proposals whose log prior is +inf (rank-deficient matrices, where the
shrinkage densities diverge) are rejected: the singular set has measure
zero and accepting would strand the chain at a pole.
"""

from __future__ import annotations

import warnings as _warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import estimators
from .core import NumericError, validate_matrix, validate_sample_size
from .priors import PriorModel
from .rng import CHAIN, IMPORTANCE, derive_rng

AT_OBSERVATION = "observation"
AT_EM = "em"


@dataclass(frozen=True)
class MCMCConfig:
    """Random-walk chain settings.

    ``proposal_variance`` is the per-entry variance of the Gaussian
    increment.  Defaults suit desk-scale runs at N = 1; experiment
    configs override them per figure.
    """

    proposal_variance: float
    iterations: int = 200_000
    burn_in: int = 20_000
    thin: int = 10
    seed: int = 0
    init: str = AT_OBSERVATION

    def __post_init__(self):
        if self.proposal_variance <= 0:
            raise ValueError(f"proposal_variance must be positive, got {self.proposal_variance}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.retained_count < 100:
            raise ValueError(
                f"retained sample count {self.retained_count} < 100; "
                "increase iterations or reduce burn_in/thin"
            )
        if self.init not in (AT_OBSERVATION, AT_EM):
            raise ValueError(f"init must be {AT_OBSERVATION!r} or {AT_EM!r}, got {self.init!r}")

    @property
    def retained_count(self) -> int:
        span = self.iterations - self.burn_in
        return (span + self.thin - 1) // self.thin


@dataclass
class ChainResult:
    """Posterior-mean estimate from one chain."""

    posterior_mean: np.ndarray
    acceptance_rate: float
    mc_standard_error: np.ndarray
    retained_samples: np.ndarray | None = None
    warnings: tuple[str, ...] = ()


@dataclass
class BatchChainResult:
    """Per-replicate posterior means for a batch of chains."""

    means: np.ndarray                 # (R, n, p)
    acceptance_rates: np.ndarray      # (R,)
    mc_standard_errors: np.ndarray    # (R, n, p)
    samples: np.ndarray | None = None  # (R, S, n, p) when kept
    warnings: tuple[str, ...] = ()


RetainedHook = Callable[[int, list[np.ndarray]], None]


def run_chains(
    Ys: np.ndarray,
    N: int,
    priors: Sequence[PriorModel],
    cfg: MCMCConfig,
    keep_samples: bool = False,
    retained_hook: RetainedHook | None = None,
    seed: int | None = None,
) -> list[BatchChainResult]:
    """Run one chain per observation in ``Ys`` for each prior.

    All priors share the proposal-noise and acceptance-uniform streams
    derived from the seed, so differences between their outputs carry
    only the prior effect (common random numbers).  ``retained_hook``
    is called as hook(k, states) after the k-th retained step with the
    current state arrays, one per prior.
    """
    Ys = np.asarray(Ys, dtype=float)
    if Ys.ndim != 3:
        raise ValueError(f"Ys must be a batch (R, n, p), got shape {Ys.shape}")
    N = validate_sample_size(N)
    R, n, p = Ys.shape
    J = len(priors)
    for prior in priors:
        if prior.shape != (n, p):
            raise ValueError(f"prior shape {prior.shape} does not match data shape {(n, p)}")

    rng = derive_rng(cfg.seed if seed is None else seed, CHAIN)
    sd = np.sqrt(cfg.proposal_variance)
    S = cfg.retained_count

    if cfg.init == AT_OBSERVATION:
        init = Ys
    else:
        init = estimators.estimate_batch(estimators.EM, Ys, N)

    states = [init.copy() for _ in range(J)]
    lp = [prior.log_density_batch(init) for prior in priors]
    d0 = init - Ys
    ll0 = -0.5 * N * np.einsum("rij,rij->r", d0, d0)
    ll = [ll0.copy() for _ in range(J)]
    for j in range(J):
        if not np.all(np.isfinite(lp[j] + ll[j])):
            raise NumericError(
                f"nonfinite initial target for prior {priors[j].name!r}; "
                "choose a different initialization"
            )

    sums = [np.zeros((R, n, p)) for _ in range(J)]
    accepted = [np.zeros(R) for _ in range(J)]
    n_batches = max(2, min(50, S // 20))
    batch_sums = [np.zeros((n_batches, R, n, p)) for _ in range(J)]
    kept = [np.empty((S, R, n, p)) for _ in range(J)] if keep_samples else None

    k = 0
    for t in range(cfg.iterations):
        eps = rng.standard_normal((R, n, p)) * sd
        logu = np.log(rng.random(R))
        for j in range(J):
            prop = states[j] + eps
            lp_new = priors[j].log_density_batch(prop)
            d = prop - Ys
            ll_new = -0.5 * N * np.einsum("rij,rij->r", d, d)
            with np.errstate(invalid="ignore"):
                dlog = (lp_new + ll_new) - (lp[j] + ll[j])
                ok = np.isfinite(lp_new) & (logu < dlog)
            states[j][ok] = prop[ok]
            lp[j][ok] = lp_new[ok]
            ll[j][ok] = ll_new[ok]
            accepted[j] += ok
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            b = k * n_batches // S
            for j in range(J):
                sums[j] += states[j]
                batch_sums[j][b] += states[j]
                if kept is not None:
                    kept[j][k] = states[j]
            if retained_hook is not None:
                retained_hook(k, states)
            k += 1

    results = []
    per_batch = S / n_batches
    for j in range(J):
        means = sums[j] / S
        rates = accepted[j] / cfg.iterations
        # Batch-means standard error of the ergodic average.
        bmeans = batch_sums[j] / per_batch
        se = np.std(bmeans, axis=0, ddof=1) / np.sqrt(n_batches)
        warns = []
        lo, hi = float(rates.min()), float(rates.max())
        if lo < 0.01:
            warns.append(f"acceptance rate {lo:.4f} below 0.01; proposal variance likely too large")
        if hi > 0.99:
            warns.append(f"acceptance rate {hi:.4f} above 0.99; proposal variance likely too small")
        results.append(
            BatchChainResult(
                means=means,
                acceptance_rates=rates,
                mc_standard_errors=se,
                samples=np.swapaxes(kept[j], 0, 1) if kept is not None else None,
                warnings=tuple(warns),
            )
        )
    return results


def posterior_mean_rwmh(
    Y: np.ndarray,
    N: int,
    prior: PriorModel,
    cfg: MCMCConfig,
    keep_samples: bool = False,
) -> ChainResult:
    """Generalized Bayes (posterior mean) estimate of M by RWMH."""
    Y = validate_matrix(Y, "Y")
    batch = run_chains(Y[None], N, [prior], cfg, keep_samples=keep_samples)[0]
    return ChainResult(
        posterior_mean=batch.means[0],
        acceptance_rate=float(batch.acceptance_rates[0]),
        mc_standard_error=batch.mc_standard_errors[0],
        retained_samples=batch.samples[0] if batch.samples is not None else None,
        warnings=batch.warnings,
    )


@dataclass
class ImportanceSamplingResult:
    posterior_mean: np.ndarray
    std_error: np.ndarray
    effective_sample_size: float
    n_samples: int


def importance_sampling_posterior_mean(
    Y: np.ndarray,
    N: int,
    prior: PriorModel,
    n_samples: int,
    seed: int,
    block_size: int = 50_000,
) -> ImportanceSamplingResult:
    """Posterior mean by self-normalized importance sampling.

    Proposes from the likelihood kernel N(Y, I/N), so the weights are
    just the prior density at the proposals; everything runs in log
    space with running max-rescaling.  Serves as the independent oracle
    against which the chains are validated.
    """
    Y = validate_matrix(Y, "Y")
    N = validate_sample_size(N)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")

    def blocks():
        rng = derive_rng(seed, IMPORTANCE)
        done = 0
        while done < n_samples:
            b = min(block_size, n_samples - done)
            Ms = Y + rng.standard_normal((b,) + Y.shape) / np.sqrt(N)
            logw = prior.log_density_batch(Ms)
            keep = ~np.isposinf(logw)
            yield Ms[keep], logw[keep]
            done += b

    # Pass 1: normalizer, weighted mean, and ESS terms.
    a = -np.inf
    sum_w = 0.0
    sum_w2 = 0.0
    sum_wM = np.zeros_like(Y)
    for Ms, logw in blocks():
        if logw.size == 0:
            continue
        m = float(np.max(logw))
        if m > a:
            scale = np.exp(a - m) if np.isfinite(a) else 0.0
            sum_w *= scale
            sum_w2 *= scale * scale
            sum_wM *= scale
            a = m
        w = np.exp(logw - a)
        sum_w += float(np.sum(w))
        sum_w2 += float(np.sum(w * w))
        sum_wM += np.einsum("r,rij->ij", w, Ms)
    if sum_w == 0.0 or not np.isfinite(a):
        raise NumericError("all importance weights underflowed; increase n_samples")
    mean = sum_wM / sum_w
    ess = sum_w * sum_w / sum_w2
    if ess < 50:
        raise NumericError(
            f"importance-sampling effective sample size {ess:.1f} < 50; increase n_samples"
        )
    # Pass 2 (same stream): delta-method standard error of the
    # self-normalized estimate.
    var = np.zeros_like(Y)
    for Ms, logw in blocks():
        if logw.size == 0:
            continue
        wbar = np.exp(logw - a) / sum_w
        dev = Ms - mean
        var += np.einsum("r,rij->ij", wbar * wbar, dev * dev)
    return ImportanceSamplingResult(
        posterior_mean=mean,
        std_error=np.sqrt(var),
        effective_sample_size=float(ess),
        n_samples=n_samples,
    )


class BayesEstimator:
    """Estimator handle computing posterior means by RWMH.

    Matches the batch protocol handle(Ys, N, seed) -> estimates used by
    the risk module; the call seed replaces the config seed so paired
    runs with equal seeds share random streams.
    """

    def __init__(self, prior: PriorModel, cfg: MCMCConfig):
        self.prior = prior
        self.cfg = cfg
        self.name = f"bayes-{prior.name}"

    def __call__(self, Ys: np.ndarray, N: int, seed: int | None = None) -> np.ndarray:
        cfg = self.cfg if seed is None else replace(self.cfg, seed=seed)
        result = run_chains(Ys, N, [self.prior], cfg)[0]
        for w in result.warnings:
            _warnings.warn(f"{self.name}: {w}", RuntimeWarning, stacklevel=2)
        return result.means

    def __repr__(self) -> str:
        return f"BayesEstimator({self.prior.name!r})"
