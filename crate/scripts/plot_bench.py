#!/usr/bin/env python3
"""PSNR-vs-time (CS) or objective-vs-iteration (RPCA) curves from a bench JSON report.

    python3 scripts/plot_bench.py out/bench_cs.json -o psnr.png

Needs matplotlib. Run bench-cs with --record-time to get a time axis.
"""

import argparse
import json
from collections import defaultdict

import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("report")
    ap.add_argument("-o", "--output", default="bench.png")
    args = ap.parse_args()

    with open(args.report) as f:
        report = json.load(f)

    by_cell = defaultdict(list)
    for s in report["series"]:
        by_cell[(s["cell"], s["seed"])].append(s)

    cells = sorted(by_cell)
    fig, axes = plt.subplots(1, len(cells), figsize=(4 * len(cells), 3.2), squeeze=False)
    for ax, key in zip(axes[0], cells):
        for s in by_cell[key]:
            pts = s["points"]
            timed = all(p["time_ms"] is not None for p in pts)
            xs = [p["time_ms"] if timed else p["k"] for p in pts]
            ys = [p["value"] for p in pts]
            ax.plot(xs, ys, label=s["solver"])
            ax.set_xlabel("time (ms)" if timed else "iteration")
            ax.set_ylabel(s["metric"])
        ax.set_title(f"{key[0]} (seed {key[1]})")
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)


if __name__ == "__main__":
    main()
