"""Command-line runner for scenarios and parameter sweeps.

Exit codes: 0 on success, 2 on configuration errors, 3 on I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .metrics import (
    bandwidth_rows,
    emit_csv,
    run_rows,
    run_scenario,
    sweep,
    sweep_run_rows,
    sweep_summary_rows,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcmsim",
        description="Maneuver-coordination simulator: single runs and sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario run")
    run_p.add_argument("--config", required=True, help="key=value scenario file")
    run_p.add_argument("--out", default="out", help="output directory (default: out)")
    run_p.add_argument("--seed", type=int, default=None, help="override the seed")
    run_p.add_argument("--stream-mcm", action="store_true",
                       help="also stream trajectory messages at the beacon rate")
    run_p.add_argument("--trace", action="store_true",
                       help="write the protocol transition log")

    sweep_p = sub.add_parser("sweep", help="run a parameter sweep")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True,
                         choices=["loss_rate", "t_timeout", "speed"])
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated axis values")
    sweep_p.add_argument("--reps", type=int, required=True)
    sweep_p.add_argument("--out", default="out")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--workers", type=int, default=1,
                         help="parallel worker processes (default: 1)")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.stream_mcm:
        overrides["stream_mcm"] = True
    if args.trace:
        overrides["trace"] = True
    if overrides:
        cfg = cfg.replace(**overrides)
    metrics = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(run_rows(metrics, cfg), out / "metrics.csv")
    emit_csv(bandwidth_rows(metrics), out / "bandwidth.csv")
    if cfg.trace:
        with open(out / "trace.log", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(metrics.trace_lines) + "\n")
    arrival = "did not finish" if metrics.arrival_time is None \
        else f"{metrics.arrival_time:.2f} s"
    print(f"outcome={metrics.coordination_outcome} arrival={arrival} "
          f"bytes={sum(metrics.tx_bytes.values())}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError("values", f"expected comma-separated numbers, got {args.values!r}")
    if not values:
        raise ConfigError("values", "at least one axis value is required")
    result = sweep(cfg, args.axis, values, args.reps, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(sweep_run_rows(result, cfg), out / "sweep_runs.csv")
    emit_csv(sweep_summary_rows(result, cfg), out / "sweep_summary.csv")
    print(f"{len(result.rows)} runs over {len(values)} values; "
          f"baseline arrival {result.baseline_arrival:.2f} s")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
