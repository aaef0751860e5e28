#!/usr/bin/env python3
"""Emit the overall-hazard-ratio comparison table and contour grid.

Writes two CSVs: the 21-cell reference table (a <= b over the fixed grid)
and the rectangular percentage-difference grid used for contour plots.
"""

import argparse
import pathlib

from hrmix.analysis import figure2_grid, table1_grid, write_grid_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results", help="output directory")
    parser.add_argument("--step", type=float, default=0.05, help="contour grid resolution")
    args = parser.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    write_grid_csv(table1_grid(), out / "table1.csv")
    print(f"wrote {out / 'table1.csv'}")

    grid = figure2_grid(resolution=args.step)
    write_grid_csv(grid, out / "figure2_grid.csv")
    print(f"wrote {out / 'figure2_grid.csv'} ({grid.c_pl.size} cells)")


if __name__ == "__main__":
    main()
