import numpy as np
import pytest

from shrinklab import blockwise, mcmc, priors, risk
from shrinklab.numdiff import grad_fd


def test_block_structure_exponents():
    b = blockwise.BlockStructure((3, 3))
    assert b.d == 6
    assert b.exponents == (-1.0, -1.0)
    assert b.r_sharp == -2.0
    b2 = blockwise.BlockStructure((2, 4))
    assert b2.exponents == (0.0, -2.0)
    with pytest.raises(ValueError):
        blockwise.BlockStructure((0, 3))


def test_bs_density_flat_for_small_blocks(rng):
    prior = blockwise.VectorPrior("bs", blockwise.BlockStructure((2, 1, 2)))
    theta = rng.standard_normal(5)
    assert blockwise.log_density_vec(prior, theta) == 0.0


def test_bs_and_mbs_unit_blocks():
    blocks = blockwise.BlockStructure((3, 3))
    theta = np.zeros(6)
    theta[0] = 1.0
    theta[3] = 1.0  # both blocks unit norm, ||theta||^2 = 2
    assert blockwise.log_density_vec(blockwise.VectorPrior("bs", blocks), theta) == 0.0
    gamma = 3.0
    val = blockwise.log_density_vec(blockwise.VectorPrior("mbs", blocks, gamma), theta)
    assert val == pytest.approx(-gamma / 2.0 * np.log(2.0), rel=1e-12)


def test_divergence_at_zero_block():
    blocks = blockwise.BlockStructure((3, 3))
    theta = np.zeros(6)
    theta[0] = 1.0  # second block zero, R_b = -1 < 0
    prior = blockwise.VectorPrior("bs", blocks)
    assert blockwise.log_density_vec(prior, theta) == np.inf


def test_gradient_matches_finite_differences(rng):
    blocks = blockwise.BlockStructure((3, 2, 4))
    prior = blockwise.VectorPrior("mbs", blocks, 2.0)
    theta = rng.standard_normal(9) * 1.5
    g = blockwise.grad_log_density_vec(prior, theta)
    g_fd = grad_fd(
        lambda th: blockwise.log_density_vec(prior, th.ravel()), theta.reshape(-1, 1)
    ).ravel()
    assert np.max(np.abs(g - g_fd)) / max(np.max(np.abs(g)), 1e-12) < 1e-6


def test_integrability_check():
    blocks = blockwise.BlockStructure((3, 3))
    ok, margins = blockwise.mbs_integrability_check(blocks, 2.0)
    assert ok and margins == (2.0, 2.0)
    ok4, _ = blockwise.mbs_integrability_check(blocks, 4.0)
    assert not ok4  # boundary excluded
    ok_mixed, margins_mixed = blockwise.mbs_integrability_check(
        blockwise.BlockStructure((2, 4)), 3.0
    )
    assert ok_mixed and margins_mixed == (1.0, 1.0)


def test_mbs_warning_outside_window():
    blocks = blockwise.BlockStructure((3, 3))
    with pytest.warns(UserWarning):
        blockwise.VectorPrior("mbs", blocks, 4.0)


def test_asymptotic_difference_quadratic():
    blocks = blockwise.BlockStructure((3, 3))
    d = blocks.d
    opt = blockwise.optimal_gamma(blocks)
    assert opt == blocks.r_sharp + d - 2  # = 2
    theta = np.array([1.0, 2.0, 0.0, 1.0, 1.0, 1.0])
    sq = float(np.sum(theta**2))
    assert blockwise.asymptotic_difference_bs(blocks, opt, theta) == pytest.approx(
        -(opt**2) / sq, rel=1e-12
    )
    assert blockwise.asymptotic_difference_bs(blocks, 2 * opt, theta) == pytest.approx(0.0, abs=1e-12)
    # negative for the whole window 0 < gamma < 2 (R_# + d - 2)
    for gamma in np.linspace(0.1, 2 * opt - 0.1, 9):
        assert blockwise.asymptotic_difference_bs(blocks, gamma, theta) < 0


def test_asymptotic_matches_generic_trace_formula(rng):
    blocks = blockwise.BlockStructure((3, 3))
    gamma = 2.0
    theta = rng.standard_normal(6) * 2.0
    bs_grad = blockwise.grad_log_density_vec(blockwise.VectorPrior("bs", blocks), theta)
    factor = priors.frobenius_power(blocks.d, 1, gamma)
    M = theta.reshape(-1, 1)
    f_grad = factor.grad_log_density(M).ravel()
    lap = float(np.trace(factor.matrix_laplacian_log(M)))
    generic = 2 * bs_grad @ f_grad + f_grad @ f_grad + 2 * lap
    closed = blockwise.asymptotic_difference_bs(blocks, gamma, theta)
    assert generic == pytest.approx(closed, rel=1e-12)


CFG = mcmc.MCMCConfig(proposal_variance=0.3, iterations=30_000, burn_in=3_000, thin=3, seed=1)


def test_dominator_small_blocks_is_james_stein(rng):
    # all blocks of size <= 2: bs is flat, dominator reduces to James-Stein
    blocks = blockwise.BlockStructure((2, 2, 2))
    y = rng.standard_normal(6) * 2.0
    dom = blockwise.brown_dominator(y, blocks, 1, CFG)
    js = (1.0 - (blocks.d - 2.0) / np.sum(y * y)) * y
    # bs posterior mean is y up to chain noise
    assert np.max(np.abs(dom - js)) < 0.1


def test_dominator_correction_coefficient(rng):
    blocks = blockwise.BlockStructure((3, 3))
    y = rng.standard_normal(6) * 1.5
    dom = blockwise.brown_dominator(y, blocks, 1, CFG)
    base = blockwise.posterior_mean_vec(y, blockwise.VectorPrior("bs", blocks), 1, CFG)
    corr = dom - base
    expected = -2.0 / np.sum(y * y) * y  # R_# + d - 2 = 2
    assert np.allclose(corr, expected, atol=1e-12)


def test_dominator_errors():
    blocks = blockwise.BlockStructure((3, 3))
    with pytest.raises(ValueError):
        blockwise.brown_dominator(np.zeros(6), blocks, 1, CFG)


def test_dominator_beats_bs_at_zero():
    blocks = blockwise.BlockStructure((3, 3))
    cfg = mcmc.MCMCConfig(proposal_variance=0.3, iterations=20_000, burn_in=2_000, thin=2, seed=2)
    est = blockwise.dominator_vs_bs_paired(blocks, np.zeros(6), 1, 300, cfg, seed=3)
    assert est.mean + 2 * est.std_error < 0


def test_single_block_bs_matches_frobenius_power_path(rng):
    # one block of size 5: bs is Stein's prior ||theta||^{-3}, which the
    # matrix machinery spells frobenius_power(gamma=3) at p=1
    blocks = blockwise.BlockStructure((5,))
    y = rng.standard_normal(5) * 1.8
    a = blockwise.posterior_mean_vec(y, blockwise.VectorPrior("bs", blocks), 1, CFG)
    cfg_b = mcmc.MCMCConfig(proposal_variance=0.3, iterations=40_000, burn_in=4_000, thin=3, seed=7)
    res = mcmc.posterior_mean_rwmh(y[:, None], 1, priors.frobenius_power(5, 1, 3.0), cfg_b)
    combined = np.sqrt(res.mc_standard_error.ravel() ** 2 + 0.01**2)
    assert np.all(np.abs(a - res.posterior_mean.ravel()) < 4 * combined + 0.02)
