"""Summarize the rigidity and Korn ratio sweeps per resolution and perturbation size."""

import argparse
from collections import defaultdict

from varexp.cli import ScenarioConfig, run_rigidity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", default="[33,65]")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--korn", action="store_true", help="sweep the Korn estimator instead")
    args = ap.parse_args()

    sub = "korn" if args.korn else "rigidity"
    cfg = ScenarioConfig.build(sub, overrides=[f"sweep.resolutions={args.resolutions}",
                                               f"sweep.seeds={list(range(args.seeds))}"])
    rows, _ = run_rigidity(cfg, korn=args.korn)
    groups = defaultdict(list)
    for r in rows:
        groups[(r["resolution"], r["eps"])].append(r["ratio"])
    print(f"{sub}: {len(rows)} rows")
    print(f"{'resolution':>10} {'eps':>8} {'min':>8} {'max':>8}")
    for (res, eps), vals in sorted(groups.items()):
        print(f"{res:10d} {eps:8.0e} {min(vals):8.4f} {max(vals):8.4f}")
    ratios = [r["ratio"] for r in rows]
    print(f"sweep max/min {max(ratios) / min(ratios):.3f}")


if __name__ == "__main__":
    main()
