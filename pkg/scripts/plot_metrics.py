#!/usr/bin/env python3
"""Plot the metric curves in a metrics.csv produced by `plmc sample`."""

import argparse
import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv", help="metrics.csv from a sample run")
    parser.add_argument("--x", choices=("step", "time"), default="step")
    parser.add_argument("--out", help="write a PNG instead of showing")
    args = parser.parse_args()

    curves = defaultdict(list)
    with open(args.csv, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["value"] == "":
                continue
            x = float(row["step"] if args.x == "step" else row["time"])
            curves[row["metric"]].append((x, float(row["value"])))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(curves):
        xs, ys = zip(*sorted(curves[name]))
        ax.plot(xs, ys, marker=".", label=name)
    ax.set_xlabel(args.x)
    ax.set_yscale("log")
    if args.x == "step" and max(x for pts in curves.values() for x, _ in pts) > 0:
        ax.set_xscale("symlog", linthresh=1)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
        print(f"wrote {args.out}")
    else:
        plt.show()


if __name__ == "__main__":
    main()
