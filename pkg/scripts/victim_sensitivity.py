"""How the Cycle Advantage of local V-cycles depends on which rank crashes.

For each victim: residual jump at the fault, kappa(CCR), kappa(k local V-cycles)
and the ratio kappa(3 V) / kappa(CCR).

    python3 scripts/victim_sensitivity.py [--victims 21 22 25 26 5 37] [--L 2] [--fault 5]
"""

import argparse

from faultmg import ParallelMultigrid, build_hierarchy, build_partition, estimate_mu, solve
from faultmg.metrics import cycle_advantage, select_K
from faultmg.resilience import CheckpointStore, FaultScenario, RecoveryStrategy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n0", type=int, default=12)
    ap.add_argument("--L", type=int, default=2)
    ap.add_argument("--partition", type=int, nargs=3, default=[4, 4, 3])
    ap.add_argument("--fault", type=int, default=5)
    ap.add_argument("--victims", type=int, nargs="+", default=[21, 22, 25, 26, 5, 37, 0])
    ap.add_argument("--max-v", type=int, default=5)
    args = ap.parse_args()
    part = build_partition(build_hierarchy(args.n0, args.L), *args.partition)
    base = solve(ParallelMultigrid(part))
    mu = estimate_mu(base)
    print(f"mu = {mu:.4f}, baseline {base.cycles} cycles")
    vcols = " ".join(f"{f'{k}xV':>7}" for k in range(1, args.max_v + 1))
    print(f"{'victim':>6} {'block':>9} {'jump':>9} {'K':>3} {'CCR':>7} {vcols} {'3V/CCR':>7}")
    for v in args.victims:
        sc = FaultScenario(args.fault, v)
        none = solve(ParallelMultigrid(part), sc)
        K = select_K(base, none, args.fault)
        ccr = solve(ParallelMultigrid(part), sc, RecoveryStrategy.ccr(), CheckpointStore())
        kc = cycle_advantage(ccr, none, mu, K).kappa
        ks = []
        for k in range(1, args.max_v + 1):
            lg = solve(ParallelMultigrid(part), sc, RecoveryStrategy.parse(f"V:{k}"))
            ks.append(cycle_advantage(lg, none, mu, K).kappa)
        block = ",".join(map(str, part.subdomains[v].block))
        ratio = ks[2] / kc if len(ks) >= 3 else float("nan")
        print(f"{v:>6} {block:>9} {none.fault_residual / base[args.fault]:>9.2e} {K:>3} {kc:>7.3f} "
              + " ".join(f"{x:>7.3f}" for x in ks) + f" {ratio:>7.3f}")


if __name__ == "__main__":
    main()
