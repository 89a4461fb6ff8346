"""Command-line interface for simulation, solving, and benchmarks.

Exit codes: 0 on success, 2 on configuration errors, 3 on solver
failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import pgm
from .admm import SolverError, solve
from .bench import (
    ExperimentConfig,
    make_dataset,
    materialize_solver,
    run_psnr_trace,
    run_scaling_N,
    run_scaling_T,
)
from .metrics import mean_psnr

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

FULL_T_VALUES = list(range(3, 21))
FULL_PATCH_SHAPES = [(32, 32), (48, 48), (64, 64), (96, 96)]


def _load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.from_json(path)


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    patch = config.patch_shapes[0]
    T = config.T_values[0]
    model, truth, y = make_dataset(config, patch, T, config.seed)
    out = Path(args.out)
    pgm.save_sequence(out / "truth", truth)
    if y.shape is None:
        raise SolverError("measurement frames are not images; cannot export PGM")
    pgm.save_sequence(out / "measurements", y)
    print(f"wrote {T} frames of {patch[0]}x{patch[1]} to {out}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    config = _load_config(args.config)
    y = pgm.load_sequence(args.data)
    truth = pgm.load_sequence(args.truth) if args.truth else None
    patch = y.shape
    T = y.T
    model = _model_for(config, patch, T)
    out = Path(args.out or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in config.solvers:
        label, cfg = materialize_solver(spec, patch)
        x_hat, trace, _ = solve(model, y, cfg, truth=truth)
        pgm.save_sequence(out / f"recon_{label}", x_hat)
        with open(out / f"trace_{label}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "phi", "primal_residual", "dual_residual", "mean_psnr"])
            for r in trace.records:
                writer.writerow([
                    r.k, f"{r.phi:.9e}", f"{r.primal_residual:.9e}",
                    f"{r.dual_residual:.9e}",
                    "" if r.mean_psnr is None else f"{r.mean_psnr:.4f}",
                ])
        final = mean_psnr(x_hat, truth) if truth is not None else float("nan")
        rows.append([label, T, model.N, final])
        print(f"{label}: solved T={T}, N={model.N}"
              + (f", mean PSNR {final:.2f} dB" if truth is not None else ""))
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "T", "N", "final_psnr"])
        for row in rows:
            writer.writerow(row[:3] + [f"{row[3]:.4f}"])
    return EXIT_OK


def _model_for(config: ExperimentConfig, patch, T: int):
    from .bench import build_blur_model

    return build_blur_model(
        patch, T, config.blur_sigma, config.blur_radius,
        config.r_sigma, config.q_sigma, config.p1_sigma,
    )


def _apply_full(config: ExperimentConfig, full: bool, sweep: str) -> ExperimentConfig:
    if full:
        if sweep == "T":
            config.T_values = list(FULL_T_VALUES)
            config.patch_shapes = [(64, 64)]
        else:
            config.patch_shapes = list(FULL_PATCH_SHAPES)
            config.T_values = [5]
    return config


def _cmd_bench_t(args) -> int:
    config = _apply_full(_load_config(args.config), args.full, "T")
    records = run_scaling_T(config)
    print(f"wrote {len(records)} rows to {Path(config.output_dir) / 'results.csv'}")
    return EXIT_OK


def _cmd_bench_n(args) -> int:
    config = _apply_full(_load_config(args.config), args.full, "N")
    records = run_scaling_N(config)
    print(f"wrote {len(records)} rows to {Path(config.output_dir) / 'results.csv'}")
    return EXIT_OK


def _cmd_trace(args) -> int:
    config = _load_config(args.config)
    records = run_psnr_trace(config)
    for r in records:
        print(f"{r.strategy}: final mean PSNR {r.final_psnr:.2f} dB "
              f"(measurements {r.measurement_psnr:.2f} dB)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyninv",
        description="Solvers and benchmarks for dynamic linear inverse imaging problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate truth and noisy measurements")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve", help="reconstruct a measurement sequence")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="measurement sequence directory")
    p.add_argument("--truth", help="ground-truth sequence directory (for PSNR)")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("bench-t", help="timing sweep over frame counts")
    p.add_argument("--config", required=True)
    p.add_argument("--full", action="store_true", help="paper-scale grid")
    p.set_defaults(func=_cmd_bench_t)

    p = sub.add_parser("bench-n", help="timing sweep over image sizes")
    p.add_argument("--config", required=True)
    p.add_argument("--full", action="store_true", help="paper-scale grid")
    p.set_defaults(func=_cmd_bench_n)

    p = sub.add_parser("trace", help="per-iteration PSNR trace at one cell")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        # single-threaded BLAS: the solvers live on small factorizations
        # where pool churn dominates, and timings stay reproducible
        with threadpool_limits(limits=1):
            return args.func(args)
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
