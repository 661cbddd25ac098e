"""Expected fees per block against block interval, exact and simulated.

Shows the congestion effect behind attack-chain fees: slower chains pack
higher-fee transactions into each block.  Writes CSV to stdout.
"""

import argparse
import sys

import numpy as np

from majattack.core import Uniform
from majattack.fees import expected_fees_per_block, fees_per_block
from majattack.runner import format_rows, to_csv

COLS = ("schema_version", "interval", "exact", "simulated", "simulated_se")


def main() -> int:
    ap = argparse.ArgumentParser(description="fees per block vs interval")
    ap.add_argument("--sigma", type=float, default=20.0)
    ap.add_argument("--b", type=int, default=5)
    ap.add_argument("--reps", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    U = Uniform(0.0, 1.0)
    rows = []
    for k, interval in enumerate(np.round(np.geomspace(0.25, 4.0, 9), 6)):
        mc = expected_fees_per_block(float(interval), args.sigma, U, args.b, args.reps, seed=args.seed + k)
        rows.append(
            {
                "schema_version": "1",
                "interval": float(interval),
                "exact": fees_per_block(float(interval), args.sigma, U, args.b),
                "simulated": mc.mean,
                "simulated_se": mc.stderr,
            }
        )
    sys.stdout.write(to_csv(format_rows(rows, COLS), COLS))
    return 0


if __name__ == "__main__":
    sys.exit(main())
