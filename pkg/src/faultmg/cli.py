"""Command line entry point.

    faultmg run CONFIG [--out DIR] [--jobs N]
    faultmg check CONFIG
    faultmg table DIR

Exit codes: 0 success, 1 run failure, 2 invalid or unreadable config,
3 missing results.  ``FAULTMG_OUTPUT_DIR`` overrides the configured output
directory; ``--out`` overrides both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, ConfigFileError, parse_config

EXIT_OK, EXIT_RUN, EXIT_CONFIG, EXIT_MISSING = 0, 1, 2, 3
ENV_OUT = "FAULTMG_OUTPUT_DIR"


def _load(path):
    try:
        return parse_config(path), None
    except ConfigFileError as exc:
        return None, f"error: {exc}"
    except ConfigError as exc:
        return None, "error: " + str(exc)


def cmd_check(args) -> int:
    cfg, err = _load(args.config)
    if err:
        print(err, file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.rank_count} ranks, n0={cfg.grid.n0}, L={cfg.grid.L}, "
          f"faults after {cfg.scenario.fault_cycles}, victim {cfg.default_victim()}, "
          f"{len(cfg.strategies)} strategies")
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiment import run_suite

    cfg, err = _load(args.config)
    if err:
        print(err, file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.environ.get(ENV_OUT) or cfg.output_dir
    try:
        res = run_suite(cfg, out, jobs=args.jobs)
    except Exception as exc:  # manifest already records the failure
        print(f"error: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(f"mu = {res.table.mu:.4f}, baseline {res.baseline.cycles} cycles, victim rank {res.victim}")
    print(res.table.format(), end="")
    print(f"results in {out}")
    return EXIT_OK


def cmd_table(args) -> int:
    from .experiment import load_table

    try:
        table = load_table(args.dir)
    except FileNotFoundError:
        print(f"error: no kappa_table.json in {args.dir}", file=sys.stderr)
        return EXIT_MISSING
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: malformed kappa_table.json: {exc}", file=sys.stderr)
        return EXIT_MISSING
    print(f"mu = {table.mu:.4f}")
    print(table.format(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="faultmg", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment suite of a config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="validate a config without running")
    c.add_argument("config")
    c.set_defaults(func=cmd_check)
    t = sub.add_parser("table", help="print the Cycle Advantage table of a finished run")
    t.add_argument("dir")
    t.set_defaults(func=cmd_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
