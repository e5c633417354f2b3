#!/usr/bin/env python3
"""Run the preset scenarios and write one CSV per preset.

    python3 scripts/run_scenarios.py --replicas 200 --out results
    python3 scripts/run_scenarios.py paper-1pct paper-5pct --replicas 1000
"""

import argparse
import sys
from dataclasses import replace

from streamal.cli import PRESETS, load_spec, run_command


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("presets", nargs="*", default=list(PRESETS), help="preset names (default: all)")
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, help="process count (default: STREAMAL_THREADS or all cores)")
    ap.add_argument("--curves", action="store_true", help="also write per-replica curves")
    args = ap.parse_args(argv)

    status = 0
    for name in args.presets:
        spec = replace(load_spec(name), replicas=args.replicas, dump_curves=args.curves)
        status = max(status, run_command(spec, args.out, args.workers))
    return status


if __name__ == "__main__":
    sys.exit(main())
