"""Command-line entry point.

Verbs: ``equilibrium``, ``attack``, ``sweep``, ``pos``, ``validate``.
Exit codes: 0 success, 2 invalid scenario or input, 3 non-convergence,
4 simulation budget exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import DomainError, NonConvergence, ScenarioError, SimulationBudgetExceeded
from .runner import (
    EQUILIBRIUM_COLUMNS,
    POS_COLUMNS,
    SWEEP_COLUMNS,
    build_report,
    equilibrium_rows,
    format_rows,
    pos_rows,
    run_scenario,
    scenario_equilibrium,
    to_csv,
    write_outputs,
)
from .scenario import MODES, dump_scenario, load_scenario, with_overrides

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGENCE = 3
EXIT_BUDGET = 4

log = logging.getLogger("majattack")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="majattack", description="Majority-attack cost analysis for longest-chain blockchains.")
    sub = p.add_subparsers(dest="verb", required=True)
    helps = {
        "equilibrium": "solve the free-entry mining equilibrium",
        "attack": "evaluate the first point of the attack grid",
        "sweep": "evaluate the full attack grid and write CSV + report",
        "pos": "proof-of-stake equilibrium and attack cost",
        "validate": "check a scenario and echo it with defaults filled in",
    }
    for verb, h in helps.items():
        sp = sub.add_parser(verb, help=h)
        sp.add_argument("--scenario", required=True, help="YAML scenario file")
        sp.add_argument("--out", default=None, help="output directory (default: scenario output.dir)")
        sp.add_argument("--reps", type=int, default=None, help="Monte Carlo replications")
        sp.add_argument("--seed", type=int, default=None, help="master seed")
        sp.add_argument("--mode", choices=MODES, default=None)
        sp.add_argument("--workers", type=int, default=1, help="worker processes for simulation")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    return path


def _run(args) -> int:
    scen = load_scenario(args.scenario)
    scen = with_overrides(scen, reps=args.reps, seed=args.seed, mode=args.mode, out=args.out, source=args.scenario)
    out = Path(scen.output_dir)

    if args.verb == "validate":
        sys.stdout.write(dump_scenario(scen))
        return EXIT_OK

    if args.verb == "equilibrium":
        eq = scenario_equilibrium(scen)
        rows = format_rows(equilibrium_rows(scen, eq), EQUILIBRIUM_COLUMNS)
        text = to_csv(rows, EQUILIBRIUM_COLUMNS)
        sys.stdout.write(text)
        _write(out, "equilibrium.csv", text)
        return EXIT_OK

    if args.verb == "pos":
        if scen.pos is None:
            raise ScenarioError(f"{args.scenario}: field 'pos': required for the pos verb")
        rows = format_rows(pos_rows(scen), POS_COLUMNS)
        text = to_csv(rows, POS_COLUMNS)
        sys.stdout.write(text)
        _write(out, "pos.csv", text)
        sys.stdout.write(build_report([], rows))
        return EXIT_OK

    limit = 1 if args.verb == "attack" else None
    res = run_scenario(scen, workers=args.workers, limit=limit)
    name = "attack" if args.verb == "attack" else "sweep"
    for path in write_outputs(res, out, name=name):
        log.info("wrote %s", path)
    if args.verb == "attack":
        for k, v in res.sweep[0].items():
            if v != "":
                sys.stdout.write(f"{k}: {v}\n")
    else:
        sys.stdout.write(to_csv(res.sweep, SWEEP_COLUMNS))
    sys.stdout.write(res.report)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (ScenarioError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationBudgetExceeded as exc:
        print(f"error: simulation budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NonConvergence as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
