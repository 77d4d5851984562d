#!/usr/bin/env python3
"""Sweep the small-ball plateau for every statistic and initial-law tier.

For each of the three sharp statistics (waiting time Z against the
asymptotic entrance law, window occupation S_Y against the normalized
invariant law on the window, ray occupation S_A0 against the one-sided
entrance law) and for the bounded tier (Z from uniform starts), run the
small-ball experiment over a geometric n-grid and tabulate the rescaled
ratio, whose plateau value should be sin(pi a)/(pi a) = 2/pi for the
sharp tier and merely bounded for the uniform one.

Desk scale by default (about half a minute); --full reproduces the
acceptance-scale protocol (n up to 1e5, M = 1e5, several minutes).
"""

import argparse
import math
import os
import time

from ergolab import boole_map, canonical_partition
from ergolab.entrance import entrance_density, entrance_density_side
from ergolab.experiments import ExperimentSpec, ld_experiment, y_restricted_law
from ergolab.sampling import EntranceLaw, UniformInterval


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--theta", type=float, default=0.3,
                    help="threshold exponent: c(n) = n**(-theta)")
    ap.add_argument("--samples", type=int, default=20_000,
                    help="Monte Carlo sample count per run")
    ap.add_argument("--n", default="1000,10000",
                    help="comma-separated n-grid")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--entrance-depth", type=int, default=512,
                    help="transfer-operator depth for the entrance laws")
    ap.add_argument("--full", action="store_true",
                    help="acceptance scale: n=1e3,1e4,1e5 and M=1e5")
    ap.add_argument("--out", default="plateau-out",
                    help="directory for the per-run CSV files")
    return ap.parse_args()


def main():
    args = parse_args()
    if args.full:
        grid, samples = (1_000, 10_000, 100_000), 100_000
    else:
        grid = tuple(int(float(v)) for v in args.n.split(","))
        samples = args.samples
    os.makedirs(args.out, exist_ok=True)

    m = boole_map()
    part = canonical_partition(m)
    depth = args.entrance_depth
    runs = (
        ("Z-sharp", "Z",
         EntranceLaw(entrance_density(m, part, depth), m),
         {"theta": args.theta}),
        ("SY-sharp", "SY", y_restricted_law(m, part),
         {"theta_tilde": args.theta}),
        ("SA0-sharp", "SA0",
         EntranceLaw(entrance_density_side(m, part, depth, side=0), m),
         {"theta": args.theta}),
        ("Z-bounded", "Z", UniformInterval(0.2, 0.8),
         {"theta": args.theta}),
    )

    target = 2.0 / math.pi
    print(f"# plateau target (sharp tier): sin(pi a)/(pi a) = {target:.4f}")
    print(f"# grid {grid}, M={samples}, seed={args.seed}")
    header = "run        " + "".join(f"  n={n:<9d}" for n in grid) + "  spread"
    print(header)
    for name, stat, law, kw in runs:
        t0 = time.perf_counter()
        spec = ExperimentSpec(m, part, law, stat, grid, samples,
                              args.seed, **kw)
        rep = ld_experiment(spec, workers=args.workers)
        path = os.path.join(args.out, f"plateau_{name}.csv")
        rep.write_csv(path)
        cells = "".join(f"  {r.ratio:<11.4f}" for r in rep.rows)
        print(f"{name:<11s}{cells}  {rep.plateau_spread:.2%}"
              f"   [{time.perf_counter() - t0:.1f}s -> {path}]")


if __name__ == "__main__":
    main()
