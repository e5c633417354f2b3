#!/usr/bin/env python3
"""Stabilization score and LOO-CV next to the true test RMSE, averaged over replicas.

    python3 scripts/stopping_proxies.py --replicas 100 --strategy random
"""

import argparse
import sys

import numpy as np

from streamal.cli import preset_config
from streamal.harness import StrategySpec, run_replicas


def _mean(col):
    # steps where no replica has a value stay NaN
    col = col[np.isfinite(col)]
    return col.mean() if col.size else float("nan")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--preset", default="paper-clean")
    ap.add_argument("--strategy", default="random")
    ap.add_argument("--replicas", type=int, default=100)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)

    cfg = preset_config(args.preset)
    runs = run_replicas(cfg, [StrategySpec.parse(args.strategy)], args.replicas, args.workers, diagnostics=True)
    rmse = np.array([r[0].rmse_curve for r in runs])
    stab = np.array([r[0].stabilization_curve for r in runs])
    loo = np.array([r[0].loocv_curve for r in runs])
    print("step,test_rmse,stabilization,loocv")
    for step in range(rmse.shape[1]):
        print(f"{step},{rmse[:, step].mean():.6g},{_mean(stab[:, step]):.6g},{_mean(loo[:, step]):.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
