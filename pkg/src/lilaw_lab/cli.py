"""``lilaw-lab`` command line: run, validate, summarize."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config, validate


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"{args.config}: {d}", file=sys.stderr)
        return 2
    from .experiment import run_experiment

    try:
        out = run_experiment(cfg, jobs=args.jobs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote artifacts to {out}")
    return 0


def cmd_validate(args) -> int:
    try:
        diags = validate(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    for d in diags:
        print(f"{args.config}: {d}")
    if not diags:
        print(f"{args.config}: ok")
    return 2 if diags else 0


def cmd_summarize(args) -> int:
    from .experiment import summarize

    try:
        rows = summarize(args.directory)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"summary.csv: {len(rows)} condition rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lilaw-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (seed, noise level, condition) in a config")
    p.add_argument("config")
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes (one run each)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config and list every problem")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("summarize", help="rebuild summary.csv from a run directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
