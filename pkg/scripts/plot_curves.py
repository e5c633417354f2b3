#!/usr/bin/env python3
"""Plot mean learning curves (with +-1 sd bands) from a results CSV.

    python3 scripts/plot_curves.py results/paper-1pct.csv -o paper-1pct.png
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from streamal.cli import read_csv  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv")
    ap.add_argument("-o", "--output")
    ap.add_argument("--no-bands", action="store_true")
    ap.add_argument("--logy", action="store_true")
    args = ap.parse_args(argv)

    results = read_csv(args.csv)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for res in results:
        steps = res.steps
        line, = ax.plot(steps, res.mean, label=res.strategy.label)
        if not args.no_bands:
            ax.fill_between(steps, res.mean - res.std, res.mean + res.std, color=line.get_color(), alpha=0.15)
    ax.set_xlabel("labels acquired")
    ax.set_ylabel("test RMSE")
    if args.logy:
        ax.set_yscale("log")
    ax.set_title(f"{results[0].scenario} ({results[0].n_replicas} replicas)")
    ax.legend()
    fig.tight_layout()
    out = args.output or args.csv.rsplit(".", 1)[0] + ".png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
