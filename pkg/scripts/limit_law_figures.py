#!/usr/bin/env python3
"""Reproduce the three limit-law CDF overlays from one shared orbit batch.

Simulates M orbits of the rational map from uniform starts, normalizes
the window occupation time (pi S_Y / (2 sqrt n)), the waiting time (Z/n)
and the right-ray occupation fraction (S_A0/n), and writes one CSV per
statistic with the empirical and limiting CDFs side by side.  Finishes
by emitting the self-contained plotting script next to the CSVs; run it
to turn each CSV into a PNG.
"""

import argparse
import os
import subprocess
import sys

from ergolab import boole_map, canonical_partition
from ergolab.cli import main as cli_main
from ergolab.experiments import cdf_experiment_batch
from ergolab.sampling import UniformInterval


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000,
                    help="orbit length (the limit-law horizon)")
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="limitlaw-out")
    ap.add_argument("--plot", action="store_true",
                    help="also run the emitted plotting script")
    return ap.parse_args()


def main():
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)
    m = boole_map()
    part = canonical_partition(m)

    batch = cdf_experiment_batch(
        m, part, UniformInterval(0.2, 0.8), ("SY", "Z", "SA0"),
        n=args.n, n_samples=args.samples, seed=args.seed,
        workers=args.workers)

    paths = []
    for stat, res in batch.items():
        path = os.path.join(args.out, f"cdf_{stat}.csv")
        res.write_csv(path, meta={"seed": args.seed})
        paths.append(path)
        print(f"{stat}: KS distance {res.ks:.4f} "
              f"({res.normalization}) -> {path}")

    script = os.path.join(args.out, "plot.py")
    cli_main(["plot-script", "--script-out", script])
    print(f"plotting script -> {script}")
    if args.plot:
        subprocess.run([sys.executable, script, *paths], check=True)


if __name__ == "__main__":
    main()
