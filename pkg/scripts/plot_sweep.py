#!/usr/bin/env python3
"""Plot final metric against step size from a sweep.csv produced by `plmc sweep`."""

import argparse
import csv
from collections import defaultdict

import matplotlib.pyplot as plt


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv", help="sweep.csv from a sweep run")
    parser.add_argument("--out", help="write a PNG instead of showing")
    args = parser.parse_args()

    curves = defaultdict(list)
    failed = defaultdict(list)
    with open(args.csv, newline="") as fh:
        for row in csv.DictReader(fh):
            h = float(row["h"])
            if row["final_metric"] == "":
                failed[row["preconditioner"]].append(h)
            else:
                curves[row["preconditioner"]].append((h, float(row["final_metric"])))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in sorted(set(curves) | set(failed)):
        if curves[name]:
            hs, ys = zip(*sorted(curves[name]))
            (line,) = ax.plot(hs, ys, marker="o", label=name)
            color = line.get_color()
        else:
            color = None
        if failed[name]:
            top = max(y for pts in curves.values() for _, y in pts) if curves else 1.0
            ax.plot(failed[name], [top] * len(failed[name]), linestyle="none",
                    marker="x", color=color)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("step size h")
    ax.set_ylabel("final metric (x = diverged)")
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
