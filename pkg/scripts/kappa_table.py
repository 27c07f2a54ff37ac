"""Cycle Advantage table for the 48-rank desk-scale setup (faults after 5, 7, 11).

    python3 scripts/kappa_table.py [--config configs/table48.json] [--out out/table48] [--jobs N]
"""

import argparse
from pathlib import Path

from faultmg.config import parse_config
from faultmg.experiment import run_suite

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "table48.json")
    ap.add_argument("--out", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    cfg = parse_config(args.config)
    res = run_suite(cfg, args.out or ROOT / cfg.output_dir, jobs=args.jobs)
    print(f"mu = {res.table.mu:.4f}, baseline {res.baseline.cycles} cycles, victim {res.victim}")
    print(res.table.format(), end="")


if __name__ == "__main__":
    main()
