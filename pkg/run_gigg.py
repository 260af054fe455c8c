#!/usr/bin/env python3
"""
CLI entry point for GIGG shrinkage regression.

Usage:
    python run_gigg.py fit data.csv --response y --groups groups.csv --adjust age,sex
    python run_gigg.py simulate --preset concentrated --replicates 200 --methods ols gigg-mmle
    python run_gigg.py prior posterior-mean-surface --a 0.05 --b 2 --tau2 0.2 --sigma2 1

Exit codes: 0 success, 2 input validation, 3 schema mismatch, 4 numeric failure.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from src import model
from src.diagnostics import TRANSFORMS, summarize_chains
from src.errors import (
    GiggError,
    InputValidationError,
    NumericError,
    SchemaMismatchError,
)
from src.io import load_dataset
from src.mmle import MmleSettings
from src.multichain import map_ordered, resolve_threads, run_chains
from src.reporting import (
    build_manifest,
    estimates_frame,
    write_all_outputs,
    write_csv,
    write_manifest,
)
from src.sampler import BETA_STRATEGIES, DEFAULT_BURN_IN, DEFAULT_DRAWS, SamplerConfig
from src.simulation import (
    MSE_UNITS,
    PRESETS,
    load_scenario,
    mse_table,
    parse_method,
    run_simulation,
)

log = logging.getLogger("gigg")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SCHEMA = 3
EXIT_NUMERIC = 4

PRIOR_KINDS = ("marginal", "tail", "kappa", "posterior-mean-surface")
DEFAULT_GRIDS = {
    "marginal": "0.01:5:100",
    "tail": "100:10000:50",
    "kappa": "0.01:0.99:50",
    "posterior-mean-surface": "0:10:21",
}
DEFAULT_METHODS = ["ols", "gigg-fixed:1/n,1/n", "gigg-fixed:1/n,1", "gigg-mmle"]


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output_dir", "-o", default="outputs", help="Output directory (default: outputs/).")
    p.add_argument("--threads", type=int, default=None,
                   help="Worker threads (overrides $GIGG_THREADS; default: CPU count).")
    p.add_argument("--progress", action="store_true", help="Show progress bars.")
    p.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging.")
    p.add_argument("--quiet", "-q", action="store_true", help="Suppress info logging.")


def _add_sampler(p: argparse.ArgumentParser) -> None:
    p.add_argument("--burnin", type=int, default=DEFAULT_BURN_IN,
                   help=f"Burn-in sweeps (default: {DEFAULT_BURN_IN}).")
    p.add_argument("--draws", type=int, default=DEFAULT_DRAWS,
                   help=f"Retained draws per chain (default: {DEFAULT_DRAWS}).")
    p.add_argument("--thin", type=int, default=1, help="Keep every thin-th sweep (default: 1).")
    p.add_argument("--beta_strategy", choices=BETA_STRATEGIES, default="auto",
                   help="β update: direct Cholesky, Woodbury (p > n) or auto (default).")


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        description="GIGG shrinkage regression",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""\
Examples:
  # Fit with MMLE for b (a = 1/n) and two chains
  python run_gigg.py fit data.csv --response y --groups groups.csv --chains 2

  # Fixed hyperparameters, fold-change summaries, binary draws
  python run_gigg.py fit data.csv --response y --groups groups.csv \\
      --hyper fixed:a=1/n,b=0.5 --transform fold-change --draws_format binary

  # Desk-scale simulation
  python run_gigg.py simulate --preset concentrated --replicates 200

  # Posterior-mean surface of a two-member group
  python run_gigg.py prior posterior-mean-surface --a 0.05 --b 2 --tau2 0.2 --sigma2 1
""",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="Fit GIGG regression to a data file.")
    fit.add_argument("data", help="Data file (CSV with header row, or Excel).")
    fit.add_argument("--response", required=True, help="Response column.")
    fit.add_argument("--groups", required=True, help="Group map CSV (column_name, group_label).")
    fit.add_argument("--adjust", default="", help="Comma-separated adjustment (unpenalized) columns.")
    fit.add_argument("--sheet", default="0", help="Excel sheet name/index (default: first sheet).")
    fit.add_argument("--chains", type=int, default=1, help="Number of chains (default: 1).")
    fit.add_argument("--seed", type=int, default=0, help="Master seed (default: 0).")
    fit.add_argument("--hyper", default="mmle",
                     help="'mmle' (a = 1/n, b estimated; default) or 'fixed:a=..,b=..' (values or 1/n).")
    fit.add_argument("--ci", type=float, default=0.95, help="Credible level (default: 0.95).")
    fit.add_argument("--transform", choices=[t.replace("_", "-") for t in TRANSFORMS], default="identity",
                     help="Summary transform of β (default: identity).")
    fit.add_argument("--draws_format", choices=["csv", "binary"], default="csv",
                     help="Draws file format (default: csv).")
    _add_sampler(fit)
    _add_common(fit)

    sim = sub.add_parser("simulate", help="Run the MSE simulation harness.")
    source = sim.add_mutually_exclusive_group()
    source.add_argument("--scenario", help="Scenario JSON file.")
    source.add_argument("--preset", choices=sorted(PRESETS), default="concentrated",
                        help="Built-in scenario (default: concentrated).")
    sim.add_argument("--replicates", type=int, default=200, help="Replicates (default: 200).")
    sim.add_argument("--methods", nargs="+", default=DEFAULT_METHODS,
                     help="Methods: ols, horseshoe, gigg-mmle, gigg-fixed:a,b.")
    sim.add_argument("--units", choices=MSE_UNITS, default="replicate_sum",
                     help="MSE units: per-replicate stratum sum (default) or per cell.")
    sim.add_argument("--seed", type=int, default=None, help="Override the scenario seed.")
    _add_sampler(sim)
    _add_common(sim)

    prior = sub.add_parser("prior", help="Tabulate prior and normal-means quantities.")
    prior.add_argument("kind", choices=PRIOR_KINDS)
    prior.add_argument("--a", type=float, default=0.5, help="Pole hyperparameter a (default: 0.5).")
    prior.add_argument("--b", type=float, default=0.5, help="Tail hyperparameter b (default: 0.5).")
    prior.add_argument("--tau2", type=float, default=1.0, help="Global variance τ² (default: 1).")
    prior.add_argument("--sigma2", type=float, default=1.0, help="Noise variance σ² (default: 1).")
    prior.add_argument("--grid", default=None, help="Grid start:stop:num (first axis).")
    prior.add_argument("--grid2", default=None, help="Grid start:stop:num for the second axis.")
    prior.add_argument("--log_grid", action="store_true", help="Space grid points geometrically.")
    prior.add_argument("--pg", type=int, choices=[1, 2], default=2, help="Group size for kappa (default: 2).")
    _add_common(prior)

    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def parse_grid(spec: str, log_scale: bool = False) -> np.ndarray:
    """'start:stop:num' -> grid of num points."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise InputValidationError(f"grid {spec!r} must look like start:stop:num")
    try:
        start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputValidationError(f"grid {spec!r} has a non-numeric part") from exc
    if num < 1:
        raise InputValidationError(f"grid {spec!r} has no points")
    if not (np.isfinite(start) and np.isfinite(stop)):
        raise InputValidationError(f"grid {spec!r} has non-finite bounds")
    if log_scale:
        if start <= 0 or stop <= 0:
            raise InputValidationError(f"log grid {spec!r} needs positive bounds")
        return np.geomspace(start, stop, num)
    return np.linspace(start, stop, num)


def parse_hyper(spec: str) -> tuple[str, str, str]:
    """'mmle' or 'fixed:a=..,b=..' -> (mode, a, b) with a/b as text ('1/n' allowed)."""
    if spec == "mmle":
        return "mmle_b", "1/n", "0.5"
    if not spec.startswith("fixed:"):
        raise InputValidationError(f"--hyper must be 'mmle' or 'fixed:a=..,b=..', got {spec!r}")
    values = {}
    for item in spec[len("fixed:"):].split(","):
        key, _, value = item.partition("=")
        values[key.strip()] = value.strip()
    if set(values) != {"a", "b"}:
        raise InputValidationError(f"--hyper fixed needs exactly a= and b=, got {spec!r}")
    for key, value in values.items():
        if value != "1/n":
            try:
                ok = float(value) > 0
            except ValueError:
                ok = False
            if not ok:
                raise InputValidationError(f"--hyper {key} must be positive or 1/n, got {value!r}")
    return "fixed", values["a"], values["b"]


def _hyper_value(raw: str, n: int) -> float:
    return 1.0 / n if raw == "1/n" else float(raw)


def _parse_sheet(val: str):
    """Small integers are sheet indices, anything else a sheet name."""
    try:
        n = int(val)
        return n if 0 <= n <= 9 else val
    except ValueError:
        return val


def _sampler_config(args, seed: int, hyper_mode: str = "fixed") -> SamplerConfig:
    return SamplerConfig(
        burn_in=args.burnin,
        draws=args.draws,
        thin=args.thin,
        seed=seed,
        beta_strategy=args.beta_strategy,
        hyper_mode=hyper_mode,
        mmle=MmleSettings(),
        progress=args.progress,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def fit_command(args) -> int:
    adjust = [c.strip() for c in args.adjust.split(",") if c.strip()]
    mode, a_raw, b_raw = parse_hyper(args.hyper)
    if not 0.0 < args.ci < 1.0:
        raise InputValidationError(f"--ci must lie in (0, 1), got {args.ci}")
    design, preprocessing = load_dataset(
        args.data, args.response, args.groups, adjust, sheet_name=_parse_sheet(args.sheet),
    )
    hyper = model.Hyperparameters.uniform(design.G, _hyper_value(a_raw, design.n), _hyper_value(b_raw, design.n))
    config = _sampler_config(args, args.seed, mode)
    chains = run_chains(design, hyper, config, n_chains=args.chains, threads=args.threads)

    transform = args.transform.replace("-", "_")
    summary = summarize_chains(chains, level=args.ci, transform=transform)
    manifest = build_manifest(
        command="fit",
        inputs={"data": args.data, "groups": args.groups},
        output_dir=Path(args.output_dir),
        config={
            "sampler": config.to_dict(),
            "chains": args.chains,
            "hyper": args.hyper,
            "response": args.response,
            "adjust": adjust,
            "ci": args.ci,
            "transform": transform,
            "draws_format": args.draws_format,
        },
        seed=args.seed,
        outputs=[],
        extra={"preprocessing": preprocessing},
    )
    write_all_outputs(chains, summary, Path(args.output_dir), args.draws_format, manifest)

    print(f"\n{'=' * 60}")
    print(f"  GIGG fit complete — n={design.n}, p={design.p}, G={design.G}, q={design.q}")
    print(f"{'=' * 60}")
    print(f"  Chains x draws:      {args.chains} x {args.draws}")
    print(f"  Final b:             {np.array2string(chains[0].hyper.b, precision=4)}")
    print(f"  Median ESS:          {np.nanmedian(summary.ess):.0f}")
    print(f"  Median ESS/second:   {np.nanmedian(summary.ess_per_second):.1f}")
    if summary.psrf is not None:
        print(f"  Max PSRF:            {np.nanmax(summary.psrf):.3f}")
    print(f"  Outputs written to:  {args.output_dir}/")
    print(f"{'=' * 60}\n")
    return EXIT_OK


def simulate_command(args) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else PRESETS[args.preset]
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    methods = [parse_method(m) for m in args.methods]
    if len({m.token for m in methods}) != len(methods):
        raise InputValidationError("duplicate method tokens")
    if args.replicates < 1:
        raise InputValidationError(f"--replicates must be >= 1, got {args.replicates}")
    sampler = _sampler_config(args, scenario.seed)
    threads = resolve_threads(args.threads)

    result = run_simulation(scenario, methods, args.replicates, sampler, threads, progress=args.progress)
    report = mse_table(result, units=args.units)

    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    names = [f"x{j + 1}" for j in range(scenario.p)]
    write_csv(report, output_dir / "mse_report.csv")
    write_csv(estimates_frame(result.truths, result.estimates, names), output_dir / "estimates.csv")
    manifest = build_manifest(
        command="simulate",
        inputs={"scenario": args.scenario or f"preset:{args.preset}"},
        output_dir=output_dir,
        config={
            "scenario": scenario.to_dict(),
            "methods": [m.token for m in methods],
            "replicates": args.replicates,
            "units": args.units,
            "sampler": sampler.to_dict(),
        },
        seed=scenario.seed,
        outputs=["mse_report.csv", "estimates.csv", "manifest.json"],
        extra={"failures": result.failures},
    )
    write_manifest(manifest, output_dir / "manifest.json")

    print(f"\n{'=' * 60}")
    print(f"  Simulation complete — {scenario.label}, {args.replicates} replicate(s)")
    print(f"{'=' * 60}")
    for _, row in report.iterrows():
        print(f"  {row['method']:<24} {row['stratum']:<9} {row['mse']:.4f}")
    if result.failures:
        print(f"  Failed fits: {len(result.failures)} (see manifest.json)")
    print(f"{'=' * 60}\n")
    return EXIT_OK


def _prior_table(args, threads: int) -> pd.DataFrame:
    grid = parse_grid(args.grid or DEFAULT_GRIDS[args.kind], log_scale=args.log_grid or (
        args.kind == "tail" and args.grid is None))
    a, b, tau2, sigma2 = args.a, args.b, args.tau2, args.sigma2

    if args.kind == "marginal":
        values = map_ordered(lambda x: model.marginal_prior_pdf(x, tau2, a, b), list(grid), threads)
        return pd.DataFrame({"beta": grid, "density": values})
    if args.kind == "tail":
        return pd.DataFrame({
            "beta": grid,
            "tail_rate": [model.tail_rate(x, tau2, a, b) for x in grid],
            "density": map_ordered(lambda x: model.marginal_prior_pdf(x, tau2, a, b), list(grid), threads),
        })

    grid2 = parse_grid(args.grid2, args.log_grid) if args.grid2 else grid
    if args.kind == "kappa":
        if args.pg == 1:
            return pd.DataFrame({
                "kappa1": grid,
                "log_density": [model.shrinkage_prior_logpdf([k], tau2, sigma2, a, b) for k in grid],
            })
        k1, k2 = np.meshgrid(grid, grid2, indexing="ij")
        return pd.DataFrame({
            "kappa1": k1.ravel(),
            "kappa2": k2.ravel(),
            "log_density": [
                model.shrinkage_prior_logpdf([u, v], tau2, sigma2, a, b) for u, v in zip(k1.ravel(), k2.ravel())
            ],
        })

    y1, y2 = np.meshgrid(grid, grid2, indexing="ij")
    points = list(zip(y1.ravel(), y2.ravel()))
    means = map_ordered(
        lambda yy: model.normal_means_posterior_mean(list(yy), tau2, sigma2, a, b, 0),
        points, threads, desc="surface", progress=args.progress,
    )
    return pd.DataFrame({"y1": y1.ravel(), "y2": y2.ravel(), "posterior_mean_1": means})


def prior_command(args) -> int:
    threads = resolve_threads(args.threads)
    table = _prior_table(args, threads)
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    name = f"prior_{args.kind.replace('-', '_')}.csv"
    write_csv(table, output_dir / name)
    manifest = build_manifest(
        command="prior",
        inputs={},
        output_dir=output_dir,
        config={
            "kind": args.kind, "a": args.a, "b": args.b, "tau2": args.tau2, "sigma2": args.sigma2,
            "grid": args.grid or DEFAULT_GRIDS[args.kind], "grid2": args.grid2,
            "log_grid": args.log_grid, "pg": args.pg,
        },
        seed=0,
        outputs=[name, "manifest.json"],
    )
    write_manifest(manifest, output_dir / "manifest.json")
    print(f"Wrote {len(table)} rows to {output_dir / name}")
    return EXIT_OK


COMMANDS = {"fit": fit_command, "simulate": simulate_command, "prior": prior_command}


def exit_code(exc: GiggError) -> int:
    if isinstance(exc, SchemaMismatchError):
        return EXIT_SCHEMA
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_VALIDATION


def main(argv=None) -> int:
    args = parse_args(argv)

    level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(name)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )

    try:
        return COMMANDS[args.command](args)
    except GiggError as exc:
        code = exit_code(exc)
        log.error("%s failed (exit %d): %s", args.command, code, exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
