"""Print the linearization table for the L-shaped bump scenario."""

import argparse

import numpy as np

from varexp.linearize import gamma_convergence_experiment, gamma_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolution", type=int, default=33)
    ap.add_argument("--bump", type=float, default=0.2)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()

    spec = gamma_scenario(args.resolution, args.bump, tuple(sorted(args.eps, reverse=True)))
    table = gamma_convergence_experiment(spec)
    print(f"linear energy {table.linear_energy:.6e}, |grad u*| {table.linear_grad_norm:.6e}")
    print(f"{'eps':>10} {'gap/F':>10} {'dist/|grad u*|':>15} {'modular/rhs':>12} {'flag':>5}")
    gap, dist = table.column("gap"), table.column("wp_dist")
    comp = table.column("modular") / table.column("compactness_rhs")
    for e, a, b, c, f in zip(table.column("eps"), gap, dist, comp, table.column("flag")):
        print(f"{e:10.1e} {a / table.linear_energy:10.2e} {b / table.linear_grad_norm:15.2e} {c:12.4f} {int(f):5d}")
    if len(gap) > 1:
        rate = np.polyfit(np.log(table.column("eps")), np.log(np.maximum(gap, 1e-300)), 1)[0]
        print(f"fitted gap rate in eps: {rate:.2f}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(table.to_csv())


if __name__ == "__main__":
    main()
