"""Command-line interface: run experiments, build tables, calibrate, selfcheck.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .harness import (
    ConfigError,
    calibrate,
    load_config,
    make_table,
    run_experiment,
    selfcheck,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampsizer",
        description="Analog circuit sizing experiments: RL agent vs. baselines "
        "over built-in amplifier benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument(
        "--seed-override", type=int, default=None,
        help="replace the config's seed list with this single seed",
    )
    run_p.add_argument("--out", default=None, help="override the output directory")

    table_p = sub.add_parser("table", help="summarize finished runs side by side")
    table_p.add_argument(
        "--in", dest="run_dirs", nargs="+", required=True,
        help="run output directories (each containing summary.json)",
    )
    table_p.add_argument("--out", default=None, help="write the CSV table here")
    table_p.add_argument("--md", default=None, help="write the markdown table here")

    sub.add_parser("selfcheck", help="validate the benchmark registry end to end")

    cal_p = sub.add_parser("calibrate", help="derive spec thresholds by sampling")
    cal_p.add_argument("--benchmark", required=True)
    cal_p.add_argument("--samples", type=int, default=20_000)
    cal_p.add_argument("--seed", type=int, default=0)
    cal_p.add_argument(
        "--out", default=None,
        help="output JSON path (default calibration/<benchmark>.json)",
    )
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg = replace(cfg, seeds=(args.seed_override,))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    cfg.validate()
    summary = run_experiment(cfg)
    agg = summary["aggregate"]
    print(
        f"{summary['benchmark']}/{summary['optimizer']}: "
        f"{len(summary['seeds'])} seed(s) x {summary['budget']} simulations"
    )
    print(
        f"best d median {agg['best_d']['median']!r} "
        f"(min {agg['best_d']['min']!r}, max {agg['best_d']['max']!r})"
    )
    first = agg["first_satisfaction"]["median"]
    print(f"first satisfaction median: {'never' if first is None else first!r}")
    print(f"outputs in {summary['config']['out_dir']}")
    return 0


def _cmd_table(args) -> int:
    summaries = []
    for run_dir in args.run_dirs:
        path = os.path.join(run_dir, "summary.json")
        try:
            with open(path) as fh:
                summaries.append(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    table = make_table(summaries)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table.csv_text)
    if args.md:
        with open(args.md, "w") as fh:
            fh.write(table.markdown)
    if not args.out and not args.md:
        print(table.markdown, end="")
    return 0


def _cmd_selfcheck(_args) -> int:
    for line in selfcheck():
        print(line)
    return 0


def _cmd_calibrate(args) -> int:
    result = calibrate(args.benchmark, n_samples=args.samples, seed=args.seed)
    out = args.out or os.path.join("calibration", f"{args.benchmark}.json")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{args.benchmark}: joint satisfaction {result['joint_fraction']:.4%} "
          f"of {result['n_samples']} samples ({result['failures']} failed)")
    for item in result["items"]:
        print(f"  {item['kind']}: {item['metric']} {item['direction']} "
              f"{item['threshold']!r}")
    print(f"written to {out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "table": _cmd_table,
    "selfcheck": _cmd_selfcheck,
    "calibrate": _cmd_calibrate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
