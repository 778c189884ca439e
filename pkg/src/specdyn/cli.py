"""Command-line entry point.

Subcommands: ``trajectory``, ``sweep``, ``stages``, ``verify``.  Flags mirror
RunConfig fields; a flat ``key = value`` config file can seed any run and
individual flags override it.  Exit codes: 0 success, 1 invariant failure,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .covariance import PowerLawCovariance, SpikedCovariance
from .reduced import StageThresholds
from .runs import (
    RunConfig,
    SweepConfig,
    run_stage_scaling,
    run_sweep,
    run_trajectory,
    run_verification_suite,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


def parse_config_file(path) -> dict:
    """Flat ``key = value`` pairs; '#' starts a comment; keys use underscores."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_RUN_FLAGS = {
    # name: (type, default)
    "algorithm": (str, "gd"),
    "mode": (str, "population-reduced"),
    "d": (int, 300),
    "m": (int, 300),
    "covariance": (str, "spiked"),
    "lam": (float, 10.0),
    "alpha": (float, 2.0),
    "basis_seed": (int, 0),
    "eta": (float, None),
    "eta_rule": (str, "fixed"),
    "kappa": (float, 0.05),
    "gd_safe_fraction": (float, 0.5),
    "rho0": (float, 1e-2),
    "init": (str, "manifold"),
    "horizon": (int, 1000),
    "batch_size": (int, 5000),
    "sigma": (float, 0.0),
    "rho": (float, 1.0 / 24.0),
    "epsilon": (float, 0.1),
    "delta": (float, 0.1),
    "seed": (int, 0),
    "log_every": (int, 1),
}


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None,
                        help="flat key = value config file; flags override it")
    for name, (typ, _) in _RUN_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None,
                            dest=name)


def _resolve_run_values(args) -> dict:
    values = {name: default for name, (_, default) in _RUN_FLAGS.items()}
    if args.config:
        file_values = parse_config_file(args.config)
        unknown = set(file_values) - set(_RUN_FLAGS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, raw in file_values.items():
            typ = _RUN_FLAGS[key][0]
            try:
                values[key] = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc
    for name in _RUN_FLAGS:
        flag = getattr(args, name)
        if flag is not None:
            values[name] = flag
    return values


def _build_run_config(values: dict) -> RunConfig:
    d = values["d"]
    if values["covariance"] == "spiked":
        direction = np.zeros(d)
        direction[1] = 1.0
        cov = SpikedCovariance(dim=d, lam=values["lam"], spike_direction=direction)
    elif values["covariance"] in ("powerlaw", "power-law"):
        cov = PowerLawCovariance(dim=d, alpha=values["alpha"],
                                 basis_seed=values["basis_seed"])
    else:
        raise ConfigError(f"unknown covariance kind {values['covariance']!r}")
    thresholds = StageThresholds(rho=values["rho"], epsilon=values["epsilon"],
                                 delta=values["delta"], kappa=values["kappa"])
    return RunConfig(
        algorithm=values["algorithm"], mode=values["mode"], d=d, m=values["m"],
        covariance=cov, rho0=values["rho0"], horizon=values["horizon"],
        eta=values["eta"], eta_rule=values["eta_rule"], kappa=values["kappa"],
        gd_safe_fraction=values["gd_safe_fraction"], init=values["init"],
        batch_size=values["batch_size"], sigma=values["sigma"],
        thresholds=thresholds, seed=values["seed"], log_every=values["log_every"],
    )


def _cmd_trajectory(args) -> int:
    config = _build_run_config(_resolve_run_values(args))
    result = run_trajectory(config, outdir=args.outdir, basename=args.basename)
    summary = {
        "status": result.status,
        "steps_run": result.steps_run,
        "final_align": result.final_alignment,
        "final_loss": result.final_loss,
        "stage_times": {k: v for k, v in vars(result.stage_times).items()},
    }
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


def _log_grid(lo: float, hi: float, count: int):
    return np.logspace(math.log10(lo), math.log10(hi), count)


def _cmd_sweep(args) -> int:
    values = _resolve_run_values(args)
    values["covariance"] = "spiked"
    values.setdefault("eta", 1e-3)
    if values["eta"] is None:
        values["eta"] = 1e-3
    base = _build_run_config(values)
    sweep = SweepConfig(
        base=base,
        etas=_log_grid(args.eta_min, args.eta_max, args.eta_points),
        lambdas=_log_grid(args.lambda_min, args.lambda_max, args.lambda_points),
        workers=args.workers,
    )
    result = run_sweep(sweep, outdir=args.outdir, basename=args.basename)
    statuses = [cell.status for cell in result.cells]
    print(json.dumps({
        "cells": len(result.cells),
        "ok": statuses.count("ok"),
        "diverged": statuses.count("diverged"),
        "best_align": max(cell.final_align for cell in result.cells),
    }, indent=2))
    return EXIT_OK


def _cmd_stages(args) -> int:
    dims = [int(x) for x in args.dims.split(",")]
    result = run_stage_scaling(
        dims, args.algorithm, lambda_rule=args.lambda_rule, eta_rule=args.eta_rule,
        rho0=args.rho0, horizon=args.horizon, outdir=args.outdir,
        basename=args.basename)
    print(json.dumps({"rows": result.rows, "fit": result.fit}, indent=2,
                     default=str))
    return EXIT_OK


def _cmd_verify(args) -> int:
    names = args.items.split(",") if args.items else None
    if names == [""]:
        names = []
    report = run_verification_suite(names, outpath=args.out)
    for item in report.items:
        print(f"{item.status:20s} {item.name}: {item.detail}")
    return report.exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="specdyn",
        description="Training-dynamics simulator for anisotropic phase retrieval",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_traj = sub.add_parser("trajectory", help="run one trajectory")
    _add_run_flags(p_traj)
    p_traj.add_argument("--outdir", type=str, default=None)
    p_traj.add_argument("--basename", type=str, default=None)
    p_traj.set_defaults(func=_cmd_trajectory)

    p_sweep = sub.add_parser("sweep", help="learning-rate x spike-strength sweep")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--eta-min", type=float, default=1e-4)
    p_sweep.add_argument("--eta-max", type=float, default=1e-1)
    p_sweep.add_argument("--eta-points", type=int, default=12)
    p_sweep.add_argument("--lambda-min", type=float, default=1.0)
    p_sweep.add_argument("--lambda-max", type=float, default=None)
    p_sweep.add_argument("--lambda-points", type=int, default=12)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--outdir", type=str, default=None)
    p_sweep.add_argument("--basename", type=str, default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_stage = sub.add_parser("stages", help="stage-time scaling across dimensions")
    p_stage.add_argument("--dims", type=str, default="100,400,1600")
    p_stage.add_argument("--algorithm", type=str, default="gd")
    p_stage.add_argument("--lambda-rule", type=str, default="sqrt")
    p_stage.add_argument("--eta-rule", type=str, default="etalam:0.02")
    p_stage.add_argument("--rho0", type=float, default=0.02)
    p_stage.add_argument("--horizon", type=int, default=200000)
    p_stage.add_argument("--outdir", type=str, default=None)
    p_stage.add_argument("--basename", type=str, default=None)
    p_stage.set_defaults(func=_cmd_stages)

    p_verify = sub.add_parser("verify", help="run the invariant verification suite")
    p_verify.add_argument("--items", type=str, default=None,
                          help="comma-separated subset (default: all)")
    p_verify.add_argument("--out", type=str, default=None,
                          help="write the JSON report here")
    p_verify.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    if getattr(args, "lambda_max", False) is None:
        args.lambda_max = float(args.d if args.d is not None else _RUN_FLAGS["d"][1])

    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
