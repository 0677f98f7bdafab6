"""Batch experiment runner.

``shrinklab <command> <config.toml>`` validates the config, dispatches
to the library, and writes a CSV artifact atomically (temp file +
rename) together with a ``<output>.meta.json`` sidecar recording the
effective config and library version.  Outputs are byte-identical
across reruns of the same config.  Exit codes: 0 success, 2 config
error, 3 numeric failure.

Chain settings can be overridden from the command line
(``--proposal-variance``, ``--iters``, ``--burn-in``, ``--thin``,
``--seed``, ``--init``); the sidecar records the overridden values.
The parallelism degree comes from the ``threads`` config key (0 = all
processors) and is overridden by the SHRINKLAB_THREADS environment
variable.  Grid points are computed independently and assembled by
index, so the thread count never changes the output.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, blockwise as blockwise_mod, diagnostics, estimators as est_mod
from . import numdiff, prediction, priors as priors_mod, risk as risk_mod
from .config import (
    COMMANDS,
    ConfigError,
    DerivativesSection,
    ExperimentConfig,
    FactorSpec,
    MinimaxitySection,
    PriorSpec,
    load_config,
    serialize_config,
)
from .core import NumericError
from .mcmc import BayesEstimator, MCMCConfig
from .priors import PriorModel
from .rng import derive_rng, derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_prior(spec: PriorSpec, n: int, p: int) -> PriorModel:
    return priors_mod.from_name(spec.name, n, p, gamma=spec.gamma, gamma_vec=spec.gamma_vec)


def build_factor(spec: FactorSpec, n: int, p: int) -> PriorModel:
    if spec.name == "scalar":
        if spec.gamma is None:
            raise ConfigError("scalar factor requires gamma")
        return priors_mod.frobenius_power(n, p, spec.gamma)
    if spec.gamma_vec is not None:
        return priors_mod.column_power(n, p, spec.gamma_vec)
    if spec.gamma is not None:
        return priors_mod.column_power(n, p, spec.gamma)
    raise ConfigError("columnwise factor requires gamma or gamma_vec")


def chain_config(cfg: ExperimentConfig, seed: int) -> MCMCConfig:
    m = cfg.mcmc
    return MCMCConfig(
        proposal_variance=m.proposal_variance,
        iterations=m.iterations,
        burn_in=m.burn_in,
        thin=m.thin,
        init=m.init,
        seed=seed,
    )


def _estimator_handles(cfg: ExperimentConfig):
    handles = []
    for spec in cfg.priors:
        prior = build_prior(spec, cfg.n, cfg.p)
        handles.append(BayesEstimator(prior, chain_config(cfg, cfg.seed)))
    for spec in cfg.estimators:
        handles.append(est_mod.ClosedFormEstimator(spec.name))
    return handles


def resolve_threads(cfg: ExperimentConfig) -> int:
    env = os.environ.get("SHRINKLAB_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"SHRINKLAB_THREADS must be an integer, got {env!r}") from exc
    else:
        value = cfg.threads
    if value <= 0:
        value = os.cpu_count() or 1
    return value


def _grid_spec(cfg: ExperimentConfig) -> risk_mod.GridSpec:
    g = cfg.grid
    return risk_mod.GridSpec(
        axis=g.axis, values=g.values, fixed_sigmas=g.fixed_sigmas, construction=g.construction
    )


# --- per-grid-point workers (top-level so they pickle for process pools)


def _risk_curve_point(args) -> list[tuple]:
    cfg, gi = args
    grid = _grid_spec(cfg)
    value = grid.values[gi]
    M = grid.build_mean(value, cfg.n, cfg.seed)
    point_seed = derive_seed(cfg.seed, 100 + gi)
    mle = est_mod.ClosedFormEstimator("mle")
    rows = []
    for handle in _estimator_handles(cfg):
        if cfg.variance_reduction == "mle_baseline" and handle.name != "mle":
            diff = risk_mod.paired_risk_difference(
                handle, mle, M, cfg.sample_size, cfg.n_reps, point_seed
            )
            est = risk_mod.RiskEstimate(
                mean=diff.mean + cfg.n * cfg.p / cfg.sample_size,
                std_error=diff.std_error,
                n_reps=cfg.n_reps,
            )
        else:
            est = risk_mod.frobenius_risk(handle, M, cfg.sample_size, cfg.n_reps, point_seed)
        rows.append((value, handle.name, est.mean, est.std_error, est.n_reps, point_seed))
    return rows


def _kl_curve_point(args) -> list[tuple]:
    cfg, gi = args
    grid = _grid_spec(cfg)
    value = grid.values[gi]
    M = grid.build_mean(value, cfg.n, cfg.seed)
    point_seed = derive_seed(cfg.seed, 100 + gi)
    rows = []
    for spec in cfg.priors:
        prior = build_prior(spec, cfg.n, cfg.p)
        task = prediction.PredictiveTask(
            M=M,
            N=cfg.sample_size,
            prior=prior,
            chain_cfg=chain_config(cfg, point_seed),
            n_future=cfg.n_future,
            n_obs_reps=cfg.n_reps,
        )
        res = prediction.kl_risk(task, point_seed)
        rows.append(
            (value, spec.label(), res.estimate.mean, res.estimate.std_error,
             res.nlpd_mean, res.raw_mean, res.sample_doubling_gap,
             res.estimate.n_reps, point_seed)
        )
    return rows


def _parallel_rows(cfg: ExperimentConfig, worker, n_items: int) -> list[tuple]:
    threads = resolve_threads(cfg)
    args = [(cfg, i) for i in range(n_items)]
    if threads == 1 or n_items == 1:
        chunks = [worker(a) for a in args]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(threads, n_items)) as pool:
            chunks = list(pool.map(worker, args))
    return [row for chunk in chunks for row in chunk]


# --- command runners, each returning (header, rows, stdout lines)


def run_risk_curve(cfg: ExperimentConfig):
    rows = _parallel_rows(cfg, _risk_curve_point, len(cfg.grid.values))
    header = ("axis_value", "estimator", "mean", "std_error", "n_reps", "seed")
    return header, rows, []


def run_kl_risk_curve(cfg: ExperimentConfig):
    rows = _parallel_rows(cfg, _kl_curve_point, len(cfg.grid.values))
    header = ("axis_value", "prior", "kl_mean", "kl_std_error", "nlpd_mean",
              "raw_kl_mean", "sample_doubling_gap", "n_reps", "seed")
    return header, rows, []


def run_asymptotic_check(cfg: ExperimentConfig):
    """Scaled paired risk differences against the second-order limit.

    The configured proposal variance is the per-unit-sample-size value:
    chains at sample size N use proposal_variance / N, matching how the
    posterior scale shrinks.
    """
    a = cfg.asymptotic
    base = build_prior(cfg.priors[0], cfg.n, cfg.p)
    factor = build_factor(a.factor, cfg.n, cfg.p)
    combined = priors_mod.multiply(base, factor)
    point = risk_mod.GridSpec(
        axis="sigma1",
        values=(a.point.sigmas[0],),
        fixed_sigmas=tuple(a.point.sigmas[1:]),
        construction=a.point.construction,
    )
    M = point.build_mean(a.point.sigmas[0], cfg.n, cfg.seed)
    limit = risk_mod.asymptotic_frobenius_difference(base, factor, M)
    rows = []
    lines = [f"asymptotic limit: {limit:.6g}"]
    for si, N in enumerate(a.sample_sizes):
        seed = derive_seed(cfg.seed, 200 + si)
        mcfg = dataclasses.replace(
            chain_config(cfg, seed), proposal_variance=cfg.mcmc.proposal_variance / N
        )
        est_a = BayesEstimator(combined, mcfg)
        est_b = BayesEstimator(base, mcfg)
        diff = risk_mod.paired_risk_difference(
            est_a, est_b, M, N, cfg.n_reps, seed,
            control_factor=factor if a.control_variate else None,
        )
        scaled = N * N * diff.mean
        scaled_se = N * N * diff.std_error
        rows.append((N, scaled, scaled_se, limit, scaled / limit if limit else float("nan"),
                     cfg.n_reps, seed))
        lines.append(f"N={N}: scaled paired difference {scaled:.4f} +- {scaled_se:.4f}")
    header = ("N", "scaled_difference", "scaled_std_error", "limit", "ratio", "n_reps", "seed")
    return header, rows, lines


def run_brown_test(cfg: ExperimentConfig):
    b = cfg.brown
    prior = build_prior(cfg.priors[0], cfg.n, cfg.p)
    report = diagnostics.brown_integral_test(
        prior, b.r_grid, cfg.n * cfg.p, list(b.seeds), n_sphere=b.n_sphere, n_inner=b.n_inner
    )
    rows = [(r, lm) for r, lm in zip(report.r_grid, report.log_underline_m)]
    header = ("r", "log_underline_m")
    verdict = "inadmissible-condition satisfied" if report.verdict and report.integral_finite \
        else "inadmissible-condition not established"
    lines = [
        f"fitted slope {report.fitted_slope:.3f} (bound {report.slope_bound:.1f} + 0.5); "
        f"integral exponent {report.integral_exponent:.3f}; {verdict}"
    ]
    if report.notes:
        lines.append(f"note: {report.notes}")
    return header, rows, lines


def _sample_points(n: int, p: int, n_points: int, scale: float, seed: int) -> list[np.ndarray]:
    rng = derive_rng(seed, 9)
    return [scale * rng.standard_normal((n, p)) for _ in range(n_points)]


def run_minimaxity_report(cfg: ExperimentConfig):
    mm = cfg.minimaxity or MinimaxitySection()
    prior = build_prior(cfg.priors[0], cfg.n, cfg.p)
    points = _sample_points(cfg.n, cfg.p, mm.n_points, mm.point_scale, cfg.seed)
    report = diagnostics.minimaxity_report(prior, points)
    rows = [(i, row.laplacian, int(row.nonpositive)) for i, row in enumerate(report.rows)]
    header = ("point", "density_laplacian", "nonpositive")
    lines = [
        f"window: {'satisfied' if report.window_ok else 'violated'} ({report.window_text})",
        f"laplacian nonpositive at all points: {report.all_nonpositive}",
        f"minimax-by-superharmonicity: {report.minimax_by_superharmonicity}",
    ]
    return header, rows, lines


def run_blockwise(cfg: ExperimentConfig):
    bw = cfg.blockwise
    blocks = blockwise_mod.BlockStructure(tuple(bw.blocks))
    ok, margins = blockwise_mod.mbs_integrability_check(blocks, bw.gamma)
    d = blocks.d
    theta = np.sqrt(bw.theta_norm2 / d) * np.ones(d)
    limit = blockwise_mod.asymptotic_difference_bs(blocks, bw.gamma, theta)
    rows = [
        ("integrability", float(ok), min(margins)),
        ("asymptotic_difference", limit, blockwise_mod.optimal_gamma(blocks)),
    ]
    lines = [
        f"blocks {list(blocks.sizes)}: R_#={blocks.r_sharp:g}, d={d}",
        f"mbs integrability at gamma={bw.gamma:g}: {ok} (margins {[f'{m:g}' for m in margins]})",
        f"asymptotic mbs-vs-bs limit at ||theta||^2={bw.theta_norm2:g}: {limit:.6g} "
        f"(optimal gamma {blockwise_mod.optimal_gamma(blocks):g})",
    ]
    if bw.sim_n_reps > 0:
        sim_seed = derive_seed(cfg.seed, 300)
        est = blockwise_mod.dominator_vs_bs_paired(
            blocks, np.zeros(d), bw.sim_sample_size, bw.sim_n_reps,
            chain_config(cfg, sim_seed), sim_seed,
        )
        rows.append(("dominator_vs_bs", est.mean, est.std_error))
        lines.append(
            f"paired dominator-vs-bs risk difference at theta=0: {est.mean:.4f} +- {est.std_error:.4f}"
        )
    header = ("quantity", "value", "extra")
    return header, rows, lines


def run_check_derivatives(cfg: ExperimentConfig):
    dv = cfg.derivatives or DerivativesSection()
    rows = []
    lines = []
    for spec in cfg.priors:
        prior = build_prior(spec, cfg.n, cfg.p)
        points = _sample_points(cfg.n, cfg.p, dv.n_points, dv.point_scale, cfg.seed)
        worst = 0.0
        for M in points:
            g = prior.grad_log_density(M)
            g_fd = numdiff.grad_fd(prior.log_density, M)
            denom = max(float(np.max(np.abs(g))), 1e-12)
            worst = max(worst, float(np.max(np.abs(g - g_fd))) / denom)
        rows.append((spec.label(), "grad_log_density", worst, 1e-6, int(worst < 1e-6)))
        lines.append(f"{spec.label()}: grad max rel err {worst:.2e}")
    header = ("prior", "check", "max_rel_err", "tolerance", "pass")
    return header, rows, lines


_RUNNERS = {
    "risk-curve": run_risk_curve,
    "kl-risk-curve": run_kl_risk_curve,
    "asymptotic-check": run_asymptotic_check,
    "brown-test": run_brown_test,
    "minimaxity-report": run_minimaxity_report,
    "blockwise": run_blockwise,
    "check-derivatives": run_check_derivatives,
}


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_artifacts(cfg: ExperimentConfig, header, rows) -> None:
    """Write the CSV atomically plus a deterministic metadata sidecar."""
    out = cfg.output_path
    out_dir = os.path.dirname(os.path.abspath(out))
    os.makedirs(out_dir, exist_ok=True)
    text = ",".join(header) + "\n"
    for row in rows:
        text += ",".join(_fmt_cell(v) for v in row) + "\n"
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    meta = {
        "config": serialize_config(cfg),
        "version": __version__,
        "seed": cfg.seed,
        "rows": len(rows),
    }
    meta_path = out + ".meta.json"
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, meta_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: ExperimentConfig) -> int:
    """Execute a validated config; returns the exit status."""
    runner = _RUNNERS[cfg.command]
    try:
        header, rows, lines = runner(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        _remove_partial_outputs(cfg)
        return EXIT_NUMERIC
    write_artifacts(cfg, header, rows)
    for line in lines:
        print(line)
    print(f"wrote {cfg.output_path} ({len(rows)} rows)")
    return EXIT_OK


def _remove_partial_outputs(cfg: ExperimentConfig) -> None:
    for path in (cfg.output_path, cfg.output_path + ".meta.json"):
        if os.path.exists(path):
            os.unlink(path)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.output is not None:
        cfg = dataclasses.replace(cfg, output_path=args.output)
    if args.threads is not None:
        cfg = dataclasses.replace(cfg, threads=args.threads)
    mcmc_overrides = {
        "proposal_variance": args.proposal_variance,
        "iterations": args.iters,
        "burn_in": args.burn_in,
        "thin": args.thin,
        "init": args.init,
    }
    changes = {k: v for k, v in mcmc_overrides.items() if v is not None}
    if changes:
        if cfg.mcmc is None:
            raise ConfigError("mcmc overrides given but the config has no [mcmc] table")
        cfg = dataclasses.replace(cfg, mcmc=dataclasses.replace(cfg.mcmc, **changes))
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="shrinklab",
        description="Shrinkage-prior risk experiments for a normal mean matrix.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sp = sub.add_parser(command, help=f"run a {command} config")
        sp.add_argument("config", help="path to the TOML experiment config")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--output", default=None, help="override output_path")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--proposal-variance", dest="proposal_variance", type=float, default=None)
        sp.add_argument("--iters", type=int, default=None)
        sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)
        sp.add_argument("--thin", type=int, default=None)
        sp.add_argument("--init", choices=("observation", "em"), default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.command != args.command:
            raise ConfigError(
                f"config command {cfg.command!r} does not match subcommand {args.command!r}"
            )
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
