#!/usr/bin/env python3
"""Show the initial law that defeats the sharp small-ball asymptotics.

Builds the return-level law G whose return-time tail is exactly
c(N_k)^(a/2) for the halving sequence c(n) = 2^(1-n), prints the exact
level/mass/tail table, then runs the small-ball experiment with the
matching threshold table.  Because the tail c^(a/2) dominates the
c^a-rate any plateau would need, the rescaled ratio grows without bound
instead of flattening at 2/pi — the sequence roughly multiplies by
2^(1/4) per level.
"""

import argparse
import math
import os

from ergolab import boole_map, canonical_partition
from ergolab.experiments import ExperimentSpec, ld_experiment
from ergolab.sampling import counterexample_density, halving_c


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=21,
                    help="number of return-time levels in the n-grid")
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="counterexample-out")
    return ap.parse_args()


def main():
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)
    m = boole_map()
    part = canonical_partition(m)
    law = counterexample_density(m, part, halving_c, m.alpha,
                                 n_levels=args.levels + 4)

    print("level  N_k   mass          exact tail c(N_k)^(a/2)")
    for j in range(min(8, len(law.levels))):
        print(f"{j:>5d}  {law.levels[j]:>3d}   {law.masses[j]:<12.6g}"
              f"  {law.tails[j]:.6g}")
    print(f"  ...  ({len(law.levels)} levels, masses sum to "
          f"{math.fsum(law.masses):.17g})")

    grid = law.levels[:args.levels]
    spec = ExperimentSpec(m, part, law, "Z", grid, args.samples, args.seed,
                          c_table=tuple(halving_c(n) for n in grid))
    rep = ld_experiment(spec, workers=args.workers)
    path = os.path.join(args.out, "counterexample.csv")
    rep.write_csv(path)

    print("\n    n   c(n)        rescaled ratio (a plateau would sit at "
          f"{2 / math.pi:.4f})")
    for c, row in zip(spec.c_table, rep.rows):
        print(f"{row.n:>5d}   {c:<9.3g}   {row.ratio:.3f}")
    print(f"\nfinal ratio {rep.rows[-1].ratio:.1f}; table -> {path}")


if __name__ == "__main__":
    main()
