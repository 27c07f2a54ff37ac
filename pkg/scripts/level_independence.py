"""Per-cycle rate mu of the no-fault V(3,3) iteration across refinement levels.

    python3 scripts/level_independence.py [--n0 4] [--levels 2 3 4] [--partition 4 4 2]
"""

import argparse
import time

from faultmg import ParallelMultigrid, build_hierarchy, build_partition, estimate_mu, solve
from faultmg.solver import SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n0", type=int, default=4)
    ap.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--partition", type=int, nargs=3, default=[4, 4, 2])
    ap.add_argument("--cycle", default="V", choices="VWF")
    args = ap.parse_args()
    print(f"{'L':>3} {'cells':>6} {'cycles':>7} {'mu':>8} {'WU':>8} {'sec':>6}")
    for L in args.levels:
        t = time.perf_counter()
        part = build_partition(build_hierarchy(args.n0, L), *args.partition)
        log = solve(ParallelMultigrid(part, SolverConfig(cycle=args.cycle)))
        print(f"{L:>3} {args.n0 * 2**L:>6} {log.cycles:>7} {estimate_mu(log):>8.4f} "
              f"{log.global_work:>8.1f} {time.perf_counter() - t:>6.1f}")


if __name__ == "__main__":
    main()
