"""Run every bundled scenario through the CLI sweep and collect the reports.

    python scripts/run_scenarios.py [--out out] [--reps N]
"""

import argparse
import sys
from pathlib import Path

from majattack.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "out"))
    ap.add_argument("--reps", type=int, default=None)
    args = ap.parse_args()
    worst = 0
    for path in sorted((ROOT / "scenarios").glob("*.yaml")):
        argv = ["sweep", "--scenario", str(path), "--out", str(Path(args.out) / path.stem)]
        if args.reps is not None:
            argv += ["--reps", str(args.reps)]
        print(f"== {path.stem}", file=sys.stderr)
        rc = cli(argv)
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(main())
