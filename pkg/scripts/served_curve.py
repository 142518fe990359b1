"""Fraction of Zipf requests served inside a cluster, as a CSV curve.

Optionally checks the analytic curve against sampled requests.
"""

import argparse
import sys

import numpy as np

from swgossip.workload import ZipfWorkload, covered_files, curve_to_csv, figure2_curve


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alphas", default="0.6,0.8,1.0,1.2")
    ap.add_argument("--files", type=int, default=10**6)
    ap.add_argument("--points", type=int, default=25, help="log-spaced coverage points")
    ap.add_argument("--sample", type=int, default=0, help="Monte-Carlo requests per point (0 = off)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    alphas = [float(a) for a in args.alphas.split(",")]
    grid = sorted({round(c, 6) for c in np.logspace(-4, 0, args.points)})
    rows = figure2_curve(alphas, args.files, grid)
    sys.stdout.write(curve_to_csv(rows))

    if args.sample:
        print("# alpha,coverage,analytic,sampled", file=sys.stderr)
        for alpha, coverage, served in rows:
            wl = ZipfWorkload(alpha, args.files, seed=args.seed)
            hits = (wl.sample(args.sample) <= covered_files(args.files, coverage)).mean()
            print(f"# {alpha:g},{coverage:g},{served:.4f},{hits:.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
