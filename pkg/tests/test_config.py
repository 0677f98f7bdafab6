import pytest

from shrinklab import config

RISK_CURVE = """
command = "risk-curve"
n = 10
p = 3
N = 1
seed = 7
n_reps = 100
output_path = "out.csv"
variance_reduction = "mle_baseline"

[grid]
axis = "sigma1"
values = [0.0, 5.0, 10.0]
fixed_sigmas = [0.0, 0.0]

[mcmc]
proposal_variance = 0.1
iterations = 2000
burn_in = 200
thin = 2

[[priors]]
name = "msvs1"
gamma = 10.0

[[priors]]
name = "svs"

[[estimators]]
name = "mem"
"""


def test_parse_basic_fields():
    cfg = config.parse_config(RISK_CURVE)
    assert cfg.command == "risk-curve"
    assert cfg.n == 10 and cfg.p == 3 and cfg.sample_size == 1
    assert cfg.grid.values == (0.0, 5.0, 10.0)
    assert cfg.mcmc.iterations == 2000
    assert cfg.priors[0].gamma == 10.0
    assert cfg.estimators[0].name == "mem"


def test_round_trip_identity():
    cfg = config.parse_config(RISK_CURVE)
    text = config.serialize_config(cfg)
    again = config.parse_config(text)
    assert again == cfg
    assert config.serialize_config(again) == text


def test_unknown_top_level_key():
    with pytest.raises(config.ConfigError, match="unknown key"):
        config.parse_config(RISK_CURVE + "\nbogus_key = 1\n")


def test_unknown_section_key():
    bad = RISK_CURVE.replace("thin = 2", "thin = 2\nwibble = 3")
    with pytest.raises(config.ConfigError, match="wibble"):
        config.parse_config(bad)


def test_missing_required_key():
    bad = RISK_CURVE.replace('command = "risk-curve"\n', "")
    with pytest.raises(config.ConfigError, match="command"):
        config.parse_config(bad)


def test_type_errors():
    bad = RISK_CURVE.replace("n = 10", 'n = "ten"')
    with pytest.raises(config.ConfigError, match="integer"):
        config.parse_config(bad)


def test_unknown_prior_name():
    bad = RISK_CURVE.replace('name = "svs"', 'name = "lasso"')
    with pytest.raises(config.ConfigError, match="lasso"):
        config.parse_config(bad)


def test_fixed_sigmas_length_checked():
    bad = RISK_CURVE.replace("fixed_sigmas = [0.0, 0.0]", "fixed_sigmas = [0.0]")
    with pytest.raises(config.ConfigError, match="fixed_sigmas"):
        config.parse_config(bad)


def test_priors_require_mcmc_table():
    bad = RISK_CURVE.replace("[mcmc]", "[notmcmc]")
    with pytest.raises(config.ConfigError):
        config.parse_config(bad)


def test_kl_curve_rejects_estimators():
    bad = RISK_CURVE.replace('command = "risk-curve"', 'command = "kl-risk-curve"')
    with pytest.raises(config.ConfigError, match="priors only"):
        config.parse_config(bad)


ASYMPTOTIC = """
command = "asymptotic-check"
n = 10
p = 3
seed = 3
n_reps = 50
output_path = "asym.csv"

[mcmc]
proposal_variance = 0.002
iterations = 2000
burn_in = 200
thin = 2

[asymptotic]
sample_sizes = [25, 100]
control_variate = true

[asymptotic.factor]
name = "scalar"
gamma = 10.0

[asymptotic.point]
sigmas = [7.0711, 5.4772, 4.4721]

[[priors]]
name = "svs"
"""


def test_parse_asymptotic():
    cfg = config.parse_config(ASYMPTOTIC)
    assert cfg.asymptotic.factor.name == "scalar"
    assert cfg.asymptotic.sample_sizes == (25, 100)
    again = config.parse_config(config.serialize_config(cfg))
    assert again == cfg


def test_other_commands_round_trip():
    brown = """
command = "brown-test"
n = 10
p = 3
seed = 1
output_path = "b.csv"
[brown]
r_grid = [5.0, 10.0, 20.0, 50.0]
seeds = [1, 2, 3]
[[priors]]
name = "svs"
"""
    cfg = config.parse_config(brown)
    assert config.parse_config(config.serialize_config(cfg)) == cfg

    blockwise = """
command = "blockwise"
n = 6
p = 1
seed = 1
output_path = "bw.csv"
[blockwise]
blocks = [3, 3]
gamma = 2.0
"""
    cfg = config.parse_config(blockwise)
    assert config.parse_config(config.serialize_config(cfg)) == cfg

    minimax = """
command = "minimaxity-report"
n = 5
p = 3
seed = 1
output_path = "mm.csv"
[minimaxity]
n_points = 10
[[priors]]
name = "msvs1"
gamma = 7.0
"""
    cfg = config.parse_config(minimax)
    assert config.parse_config(config.serialize_config(cfg)) == cfg
