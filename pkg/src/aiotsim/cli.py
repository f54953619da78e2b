"""Command-line experiment runner.

    aiot run <config> [--seed N] [--out PATH]
    aiot describe <config>

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.
Identical (config, seed) pairs write byte-identical CSV files.
"""
from __future__ import annotations

import argparse
import sys

from .config import load_config, resolved_lines
from .errors import AiotError, ConfigError
from .experiments import run_experiment, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aiot",
        description="Backscatter ambient-IoT link and network experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment and write its CSV")
    run_p.add_argument("config", help="scenario config file (INI format)")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
    run_p.add_argument("--out", default=None, help="override the output path")

    desc_p = sub.add_parser("describe",
                            help="print every resolved parameter and constant")
    desc_p.add_argument("config", help="scenario config file (INI format)")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed,
                      out_override=args.out)
    header, rows = run_experiment(cfg)
    out_path = cfg.out or f"{cfg.kind}.csv"
    try:
        write_csv(out_path, header, rows)
    except OSError as exc:
        print(f"error: cannot write {out_path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"experiment={cfg.kind} seed={cfg.seed} rows={len(rows)}")
    for row in rows[:20]:
        print("  " + " ".join(f"{h}={v}" for h, v in zip(header, row)))
    if len(rows) > 20:
        print(f"  ... {len(rows) - 20} more rows")
    print(f"wrote {out_path}")
    return EXIT_OK


def _cmd_describe(args) -> int:
    cfg = load_config(args.config)
    for line in resolved_lines(cfg):
        print(line)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_describe(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AiotError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
