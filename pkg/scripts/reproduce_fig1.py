"""Tabulate the feedback speed-up bound over a range of target impurities.

    python3 scripts/reproduce_fig1.py --out fig1.csv
"""
import argparse
import sys

import numpy as np

from rapid_purify import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--decades", type=int, default=8, help="targets from 0.2 down to 1e-DECADES")
    ap.add_argument("--per-decade", type=int, default=4)
    ap.add_argument("--out", default="fig1.csv")
    args = ap.parse_args()
    targets = np.logspace(np.log10(0.2), -args.decades, args.decades * args.per_decade + 1)
    grid = ",".join(repr(float(t)) for t in targets)
    return cli.main(["fig1", "--targets", grid, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
