"""Whitney decomposition statistics: cubes per level and side against boundary distance."""

import argparse
import json
from collections import Counter

from varexp.grid import make_domain
from varexp.whitney import coverage_mask, overlap_count, whitney_decomposition


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shape", default="lshape", choices=["rectangle", "lshape", "disk", "graph-halfspace"])
    ap.add_argument("--resolution", type=int, default=65)
    ap.add_argument("--json", help="write the cube list here")
    args = ap.parse_args()

    dom = make_domain(args.shape, args.resolution)
    cubes = whitney_decomposition(dom)
    levels = Counter(c.level for c in cubes)
    print(f"{args.shape} at resolution {args.resolution}: {len(cubes)} cubes")
    print(f"{'level':>5} {'side':>10} {'count':>6} {'dist/side':>16}")
    for lv in sorted(levels):
        sel = [c for c in cubes if c.level == lv]
        q = [dom.cube_distance(c.lo, c.hi) / c.side for c in sel]
        print(f"{lv:5d} {sel[0].side:10.5f} {len(sel):6d} {min(q):7.3f}-{max(q):7.3f}")
    print(f"max overlap of doubled cubes {int(overlap_count(dom, cubes).max())}")
    print(f"inside nodes covered: {bool(coverage_mask(dom, cubes)[dom.inside_mask].all())}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([c.to_json() for c in cubes], fh)


if __name__ == "__main__":
    main()
