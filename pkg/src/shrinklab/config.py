"""Declarative experiment configs: strict TOML parsing, validation, and
deterministic serialization.

A config is a flat TOML document whose keys mirror the library types:
top-level run settings, a ``[grid]`` or ``[point]`` table describing the
mean matrices, a ``[mcmc]`` table with chain settings, and
``[[priors]]`` / ``[[estimators]]`` lists.  Unknown keys anywhere are
errors; every field is validated before any computation starts.
Serialization is canonical (fixed key order, shortest round-tripping
float repr), so parse -> serialize -> parse is the identity and two
identical configs produce byte-identical artifacts.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COMMANDS = (
    "risk-curve",
    "kl-risk-curve",
    "asymptotic-check",
    "brown-test",
    "minimaxity-report",
    "blockwise",
    "check-derivatives",
)


class ConfigError(ValueError):
    """Invalid or unknown configuration contents."""


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return table[key]


def _no_unknown(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _as_float(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _as_str(value, key: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def _as_bool(value, key: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{key} must be a boolean, got {value!r}")
    return value


def _as_float_list(value, key: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{key} must be a list of numbers, got {value!r}")
    return tuple(_as_float(v, key) for v in value)


def _as_int_list(value, key: str) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{key} must be a list of integers, got {value!r}")
    return tuple(_as_int(v, key) for v in value)


@dataclass(frozen=True)
class PriorSpec:
    name: str
    gamma: float | None = None
    gamma_vec: tuple[float, ...] | None = None

    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class EstimatorSpec:
    name: str


@dataclass(frozen=True)
class MCMCSection:
    proposal_variance: float
    iterations: int = 200_000
    burn_in: int = 20_000
    thin: int = 10
    init: str = "observation"


@dataclass(frozen=True)
class GridSection:
    axis: str
    values: tuple[float, ...]
    fixed_sigmas: tuple[float, ...]
    construction: str = "padded_diagonal"


@dataclass(frozen=True)
class PointSection:
    sigmas: tuple[float, ...]
    construction: str = "padded_diagonal"


@dataclass(frozen=True)
class FactorSpec:
    name: str  # "scalar" -> frobenius_power, "columnwise" -> column_power
    gamma: float | None = None
    gamma_vec: tuple[float, ...] | None = None


@dataclass(frozen=True)
class AsymptoticSection:
    factor: FactorSpec
    point: PointSection
    sample_sizes: tuple[int, ...] = (25, 100)
    control_variate: bool = True


@dataclass(frozen=True)
class BrownSection:
    r_grid: tuple[float, ...]
    seeds: tuple[int, ...]
    n_sphere: int = 200
    n_inner: int = 10_000


@dataclass(frozen=True)
class MinimaxitySection:
    n_points: int = 20
    point_scale: float = 2.0


@dataclass(frozen=True)
class BlockwiseSection:
    blocks: tuple[int, ...]
    gamma: float
    theta_norm2: float = 25.0
    sim_n_reps: int = 0
    sim_sample_size: int = 1


@dataclass(frozen=True)
class DerivativesSection:
    n_points: int = 20
    point_scale: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    n: int
    p: int
    sample_size: int
    seed: int
    output_path: str
    n_reps: int = 1000
    threads: int = 0
    variance_reduction: str = "none"
    n_future: int = 100
    priors: tuple[PriorSpec, ...] = ()
    estimators: tuple[EstimatorSpec, ...] = ()
    grid: GridSection | None = None
    mcmc: MCMCSection | None = None
    asymptotic: AsymptoticSection | None = None
    brown: BrownSection | None = None
    minimaxity: MinimaxitySection | None = None
    blockwise: BlockwiseSection | None = None
    derivatives: DerivativesSection | None = field(default=None)


_TOP_KEYS = {
    "command", "n", "p", "N", "seed", "output_path", "n_reps", "threads",
    "variance_reduction", "n_future", "priors", "estimators", "grid", "mcmc",
    "asymptotic", "brown", "minimaxity", "blockwise", "derivatives",
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML config document."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    _no_unknown(raw, _TOP_KEYS, "top level")

    command = _as_str(_require(raw, "command", "top level"), "command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    n = _as_int(_require(raw, "n", "top level"), "n")
    p = _as_int(_require(raw, "p", "top level"), "p")
    N = _as_int(raw.get("N", 1), "N")
    seed = _as_int(_require(raw, "seed", "top level"), "seed")
    output_path = _as_str(_require(raw, "output_path", "top level"), "output_path")
    n_reps = _as_int(raw.get("n_reps", 1000), "n_reps")
    threads = _as_int(raw.get("threads", 0), "threads")
    variance_reduction = _as_str(raw.get("variance_reduction", "none"), "variance_reduction")
    n_future = _as_int(raw.get("n_future", 100), "n_future")
    if n < 1 or p < 1 or N < 1 or n_reps < 1 or n_future < 1:
        raise ConfigError("n, p, N, n_reps, n_future must all be positive")
    if seed < 0 or threads < 0:
        raise ConfigError("seed and threads must be nonnegative")
    if variance_reduction not in ("none", "mle_baseline"):
        raise ConfigError(f"variance_reduction must be 'none' or 'mle_baseline', got {variance_reduction!r}")

    priors = tuple(_parse_prior(t, i) for i, t in enumerate(raw.get("priors", [])))
    estimators = tuple(_parse_estimator(t, i) for i, t in enumerate(raw.get("estimators", [])))
    grid = _parse_grid(raw["grid"]) if "grid" in raw else None
    mcmc = _parse_mcmc(raw["mcmc"]) if "mcmc" in raw else None
    asymptotic = _parse_asymptotic(raw["asymptotic"]) if "asymptotic" in raw else None
    brown = _parse_brown(raw["brown"]) if "brown" in raw else None
    minimaxity = _parse_minimaxity(raw["minimaxity"]) if "minimaxity" in raw else None
    blockwise = _parse_blockwise(raw["blockwise"]) if "blockwise" in raw else None
    if "derivatives" in raw:
        deriv = raw["derivatives"]
        _no_unknown(deriv, {"n_points", "point_scale"}, "[derivatives]")
        derivatives = DerivativesSection(
            n_points=_as_int(deriv.get("n_points", 20), "derivatives.n_points"),
            point_scale=_as_float(deriv.get("point_scale", 2.0), "derivatives.point_scale"),
        )
    else:
        derivatives = None

    cfg = ExperimentConfig(
        command=command, n=n, p=p, sample_size=N, seed=seed, output_path=output_path,
        n_reps=n_reps, threads=threads, variance_reduction=variance_reduction,
        n_future=n_future, priors=priors, estimators=estimators, grid=grid, mcmc=mcmc,
        asymptotic=asymptotic, brown=brown, minimaxity=minimaxity, blockwise=blockwise,
        derivatives=derivatives,
    )
    _validate_for_command(cfg)
    return cfg


def _parse_prior(t, i) -> PriorSpec:
    where = f"[[priors]] entry {i}"
    if not isinstance(t, dict):
        raise ConfigError(f"{where} must be a table")
    _no_unknown(t, {"name", "gamma", "gamma_vec"}, where)
    name = _as_str(_require(t, "name", where), "priors.name")
    if name not in ("svs", "msvs1", "msvs2", "stein", "uniform"):
        raise ConfigError(f"unknown prior name {name!r} in {where}")
    gamma = _as_float(t["gamma"], "priors.gamma") if "gamma" in t else None
    gamma_vec = _as_float_list(t["gamma_vec"], "priors.gamma_vec") if "gamma_vec" in t else None
    return PriorSpec(name=name, gamma=gamma, gamma_vec=gamma_vec)


def _parse_estimator(t, i) -> EstimatorSpec:
    where = f"[[estimators]] entry {i}"
    if not isinstance(t, dict):
        raise ConfigError(f"{where} must be a table")
    _no_unknown(t, {"name"}, where)
    name = _as_str(_require(t, "name", where), "estimators.name")
    if name not in ("mle", "em", "mem", "js"):
        raise ConfigError(f"unknown estimator name {name!r} in {where}")
    return EstimatorSpec(name=name)


def _parse_grid(t) -> GridSection:
    _no_unknown(t, {"axis", "values", "fixed_sigmas", "construction"}, "[grid]")
    axis = _as_str(_require(t, "axis", "[grid]"), "grid.axis")
    if axis not in ("sigma1", "sigma2"):
        raise ConfigError(f"grid.axis must be 'sigma1' or 'sigma2', got {axis!r}")
    construction = _as_str(t.get("construction", "padded_diagonal"), "grid.construction")
    if construction not in ("padded_diagonal", "haar_rotated"):
        raise ConfigError(f"unknown grid.construction {construction!r}")
    return GridSection(
        axis=axis,
        values=_as_float_list(_require(t, "values", "[grid]"), "grid.values"),
        fixed_sigmas=_as_float_list(_require(t, "fixed_sigmas", "[grid]"), "grid.fixed_sigmas"),
        construction=construction,
    )


def _parse_point(t, where: str) -> PointSection:
    _no_unknown(t, {"sigmas", "construction"}, where)
    construction = _as_str(t.get("construction", "padded_diagonal"), f"{where}.construction")
    if construction not in ("padded_diagonal", "haar_rotated"):
        raise ConfigError(f"unknown {where}.construction {construction!r}")
    return PointSection(
        sigmas=_as_float_list(_require(t, "sigmas", where), f"{where}.sigmas"),
        construction=construction,
    )


def _parse_mcmc(t) -> MCMCSection:
    _no_unknown(t, {"proposal_variance", "iterations", "burn_in", "thin", "init"}, "[mcmc]")
    init = _as_str(t.get("init", "observation"), "mcmc.init")
    if init not in ("observation", "em"):
        raise ConfigError(f"mcmc.init must be 'observation' or 'em', got {init!r}")
    return MCMCSection(
        proposal_variance=_as_float(_require(t, "proposal_variance", "[mcmc]"), "mcmc.proposal_variance"),
        iterations=_as_int(t.get("iterations", 200_000), "mcmc.iterations"),
        burn_in=_as_int(t.get("burn_in", 20_000), "mcmc.burn_in"),
        thin=_as_int(t.get("thin", 10), "mcmc.thin"),
        init=init,
    )


def _parse_asymptotic(t) -> AsymptoticSection:
    _no_unknown(t, {"factor", "point", "sample_sizes", "control_variate"}, "[asymptotic]")
    ft = _require(t, "factor", "[asymptotic]")
    _no_unknown(ft, {"name", "gamma", "gamma_vec"}, "[asymptotic.factor]")
    fname = _as_str(_require(ft, "name", "[asymptotic.factor]"), "factor.name")
    if fname not in ("scalar", "columnwise"):
        raise ConfigError(f"factor.name must be 'scalar' or 'columnwise', got {fname!r}")
    factor = FactorSpec(
        name=fname,
        gamma=_as_float(ft["gamma"], "factor.gamma") if "gamma" in ft else None,
        gamma_vec=_as_float_list(ft["gamma_vec"], "factor.gamma_vec") if "gamma_vec" in ft else None,
    )
    return AsymptoticSection(
        factor=factor,
        point=_parse_point(_require(t, "point", "[asymptotic]"), "[asymptotic.point]"),
        sample_sizes=_as_int_list(t.get("sample_sizes", [25, 100]), "asymptotic.sample_sizes"),
        control_variate=_as_bool(t.get("control_variate", True), "asymptotic.control_variate"),
    )


def _parse_brown(t) -> BrownSection:
    _no_unknown(t, {"r_grid", "seeds", "n_sphere", "n_inner"}, "[brown]")
    return BrownSection(
        r_grid=_as_float_list(_require(t, "r_grid", "[brown]"), "brown.r_grid"),
        seeds=_as_int_list(_require(t, "seeds", "[brown]"), "brown.seeds"),
        n_sphere=_as_int(t.get("n_sphere", 200), "brown.n_sphere"),
        n_inner=_as_int(t.get("n_inner", 10_000), "brown.n_inner"),
    )


def _parse_minimaxity(t) -> MinimaxitySection:
    _no_unknown(t, {"n_points", "point_scale"}, "[minimaxity]")
    return MinimaxitySection(
        n_points=_as_int(t.get("n_points", 20), "minimaxity.n_points"),
        point_scale=_as_float(t.get("point_scale", 2.0), "minimaxity.point_scale"),
    )


def _parse_blockwise(t) -> BlockwiseSection:
    _no_unknown(t, {"blocks", "gamma", "theta_norm2", "sim_n_reps", "sim_sample_size"}, "[blockwise]")
    return BlockwiseSection(
        blocks=_as_int_list(_require(t, "blocks", "[blockwise]"), "blockwise.blocks"),
        gamma=_as_float(_require(t, "gamma", "[blockwise]"), "blockwise.gamma"),
        theta_norm2=_as_float(t.get("theta_norm2", 25.0), "blockwise.theta_norm2"),
        sim_n_reps=_as_int(t.get("sim_n_reps", 0), "blockwise.sim_n_reps"),
        sim_sample_size=_as_int(t.get("sim_sample_size", 1), "blockwise.sim_sample_size"),
    )


def _validate_for_command(cfg: ExperimentConfig) -> None:
    if cfg.command in ("risk-curve", "kl-risk-curve"):
        if cfg.grid is None:
            raise ConfigError(f"{cfg.command} requires a [grid] table")
        if len(cfg.grid.fixed_sigmas) != cfg.p - 1:
            raise ConfigError(
                f"grid.fixed_sigmas must have length p-1={cfg.p - 1}, "
                f"got {len(cfg.grid.fixed_sigmas)}"
            )
        if not cfg.priors and not cfg.estimators:
            raise ConfigError(f"{cfg.command} needs at least one prior or estimator")
        if cfg.command == "kl-risk-curve" and cfg.estimators:
            raise ConfigError("kl-risk-curve takes priors only")
        if cfg.priors and cfg.mcmc is None:
            raise ConfigError(f"{cfg.command} with priors requires an [mcmc] table")
    elif cfg.command == "asymptotic-check":
        if cfg.asymptotic is None:
            raise ConfigError("asymptotic-check requires an [asymptotic] table")
        if len(cfg.priors) != 1:
            raise ConfigError("asymptotic-check needs exactly one [[priors]] entry (the base prior)")
        if cfg.mcmc is None:
            raise ConfigError("asymptotic-check requires an [mcmc] table")
        if len(cfg.asymptotic.point.sigmas) != cfg.p:
            raise ConfigError(f"asymptotic.point.sigmas must have length p={cfg.p}")
    elif cfg.command == "brown-test":
        if cfg.brown is None:
            raise ConfigError("brown-test requires a [brown] table")
        if len(cfg.priors) != 1:
            raise ConfigError("brown-test needs exactly one [[priors]] entry")
    elif cfg.command == "minimaxity-report":
        if len(cfg.priors) != 1:
            raise ConfigError("minimaxity-report needs exactly one [[priors]] entry")
    elif cfg.command == "blockwise":
        if cfg.blockwise is None:
            raise ConfigError("blockwise requires a [blockwise] table")
        if cfg.blockwise.sim_n_reps > 0 and cfg.mcmc is None:
            raise ConfigError("blockwise with sim_n_reps > 0 requires an [mcmc] table")
    elif cfg.command == "check-derivatives":
        if not cfg.priors:
            raise ConfigError("check-derivatives needs at least one [[priors]] entry")


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return parse_config(fh.read().decode("utf-8"))


# ---------------------------------------------------------------------------
# canonical serialization


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical TOML text for a config (parse o serialize == identity)."""
    lines = [
        f"command = {_fmt_value(cfg.command)}",
        f"n = {cfg.n}",
        f"p = {cfg.p}",
        f"N = {cfg.sample_size}",
        f"seed = {cfg.seed}",
        f"n_reps = {cfg.n_reps}",
        f"n_future = {cfg.n_future}",
        f"threads = {cfg.threads}",
        f"variance_reduction = {_fmt_value(cfg.variance_reduction)}",
        f"output_path = {_fmt_value(cfg.output_path)}",
    ]
    if cfg.grid is not None:
        g = cfg.grid
        lines += [
            "", "[grid]",
            f"axis = {_fmt_value(g.axis)}",
            f"values = {_fmt_value(g.values)}",
            f"fixed_sigmas = {_fmt_value(g.fixed_sigmas)}",
            f"construction = {_fmt_value(g.construction)}",
        ]
    if cfg.mcmc is not None:
        m = cfg.mcmc
        lines += [
            "", "[mcmc]",
            f"proposal_variance = {_fmt_value(m.proposal_variance)}",
            f"iterations = {m.iterations}",
            f"burn_in = {m.burn_in}",
            f"thin = {m.thin}",
            f"init = {_fmt_value(m.init)}",
        ]
    if cfg.asymptotic is not None:
        a = cfg.asymptotic
        lines += ["", "[asymptotic]",
                  f"sample_sizes = {_fmt_value(list(a.sample_sizes))}",
                  f"control_variate = {_fmt_value(a.control_variate)}"]
        lines += ["", "[asymptotic.factor]", f"name = {_fmt_value(a.factor.name)}"]
        if a.factor.gamma is not None:
            lines.append(f"gamma = {_fmt_value(a.factor.gamma)}")
        if a.factor.gamma_vec is not None:
            lines.append(f"gamma_vec = {_fmt_value(a.factor.gamma_vec)}")
        lines += ["", "[asymptotic.point]",
                  f"sigmas = {_fmt_value(a.point.sigmas)}",
                  f"construction = {_fmt_value(a.point.construction)}"]
    if cfg.brown is not None:
        b = cfg.brown
        lines += ["", "[brown]",
                  f"r_grid = {_fmt_value(b.r_grid)}",
                  f"seeds = {_fmt_value(list(b.seeds))}",
                  f"n_sphere = {b.n_sphere}",
                  f"n_inner = {b.n_inner}"]
    if cfg.minimaxity is not None:
        mm = cfg.minimaxity
        lines += ["", "[minimaxity]",
                  f"n_points = {mm.n_points}",
                  f"point_scale = {_fmt_value(mm.point_scale)}"]
    if cfg.blockwise is not None:
        bw = cfg.blockwise
        lines += ["", "[blockwise]",
                  f"blocks = {_fmt_value(list(bw.blocks))}",
                  f"gamma = {_fmt_value(bw.gamma)}",
                  f"theta_norm2 = {_fmt_value(bw.theta_norm2)}",
                  f"sim_n_reps = {bw.sim_n_reps}",
                  f"sim_sample_size = {bw.sim_sample_size}"]
    if cfg.derivatives is not None:
        dv = cfg.derivatives
        lines += ["", "[derivatives]",
                  f"n_points = {dv.n_points}",
                  f"point_scale = {_fmt_value(dv.point_scale)}"]
    for prior in cfg.priors:
        lines += ["", "[[priors]]", f"name = {_fmt_value(prior.name)}"]
        if prior.gamma is not None:
            lines.append(f"gamma = {_fmt_value(prior.gamma)}")
        if prior.gamma_vec is not None:
            lines.append(f"gamma_vec = {_fmt_value(prior.gamma_vec)}")
    for est in cfg.estimators:
        lines += ["", "[[estimators]]", f"name = {_fmt_value(est.name)}"]
    return "\n".join(lines) + "\n"
