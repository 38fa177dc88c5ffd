"""Median ROC curve across seeds by vertical averaging.

Reads ROC files written by ``tppg roc`` (``fpr,tpr,lambda`` rows and a
``# auc=`` line), interpolates each curve's tpr on a common fpr grid and
writes the pointwise median (and quartiles) as CSV.

Usage::

    python scripts/median_roc.py roc_seed*.csv --out median_roc.csv
"""

import argparse
import sys

import numpy as np


def read_roc(path):
    rows = [ln.split(",") for ln in open(path).read().splitlines()[1:] if ln and not ln.startswith("#")]
    fpr = np.array([float(r[0]) for r in rows])
    tpr = np.array([float(r[1]) for r in rows])
    return fpr, tpr


def tpr_on_grid(fpr, tpr, grid):
    """Upper envelope of the curve interpolated linearly between its points."""
    # several points can share an fpr; keep the best tpr for each
    ux = np.unique(fpr)
    uy = np.array([tpr[fpr == x].max() for x in ux])
    return np.interp(grid, ux, uy)


def median_curve(curves, n_grid=101):
    grid = np.linspace(0.0, 1.0, n_grid)
    stack = np.array([tpr_on_grid(f, t, grid) for f, t in curves])
    return grid, np.quantile(stack, [0.25, 0.5, 0.75], axis=0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="median ROC by vertical averaging")
    parser.add_argument("files", nargs="+")
    parser.add_argument("--out", required=True)
    parser.add_argument("--grid", type=int, default=101, help="number of fpr grid points")
    args = parser.parse_args(argv)
    grid, (q1, med, q3) = median_curve([read_roc(f) for f in args.files], args.grid)
    with open(args.out, "w") as fh:
        fh.write("fpr,tpr_median,tpr_q25,tpr_q75\n")
        for row in zip(grid, med, q1, q3):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    area = float(np.sum(np.diff(grid) * (med[1:] + med[:-1]) / 2))
    print(f"{len(args.files)} curves; area under the median curve {area:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
