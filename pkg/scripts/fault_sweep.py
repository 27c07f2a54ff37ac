"""Kappa of a few strategies as the fault moves through the iteration.

    python3 scripts/fault_sweep.py [--faults 2 3 5 7 9 11] [--strategies ccr V:1 V:3 pcg:10 smooth:10]
"""

import argparse
from pathlib import Path

from faultmg.config import config_from_dict
from faultmg.experiment import run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n0", type=int, default=12)
    ap.add_argument("--L", type=int, default=2)
    ap.add_argument("--partition", type=int, nargs=3, default=[4, 4, 3])
    ap.add_argument("--faults", type=int, nargs="+", default=[2, 3, 5, 7, 9, 11])
    ap.add_argument("--strategies", nargs="+", default=["ccr", "V:1", "V:3", "pcg:10", "smooth:10"])
    ap.add_argument("--victim", type=int, default=None)
    ap.add_argument("--out", type=Path, default=None, help="also write the suite artifacts here")
    args = ap.parse_args()
    cfg = config_from_dict({"grid": {"n0": args.n0, "L": args.L}, "partition": args.partition,
                            "scenario": {"fault_cycles": args.faults, "victim": args.victim},
                            "strategies": args.strategies})
    res = run_suite(cfg, args.out, write=args.out is not None)
    labels = [r.strategy for r in res.table.rows if r.fault_cycle == args.faults[0]]
    print(f"mu = {res.table.mu:.4f}, victim {res.victim}")
    print(f"{'fault':>5} {'K':>3} " + " ".join(f"{l:>10}" for l in labels))
    for k in res.table.fault_cycles():
        K = res.table.get(k, "none").K
        print(f"{k:>5} {K:>3} " + " ".join(f"{res.table.kappa(k, l):>10.3f}" for l in labels))


if __name__ == "__main__":
    main()
