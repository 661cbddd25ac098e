"""Evaluate a scenario: equilibrium, attack-cost sweep, optional simulation and PoS block.

Rows are formatted to fixed-precision strings before the report is built, so a
report recomputed from the written CSV is identical to the one printed.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attack import (
    AttackPlan,
    difficulty_adjust,
    honest_power,
    linear_net_cost,
    net_cost,
    opportunity_cost,
    resolve_attack_power,
)
from .core import Linear, LinearPremium
from .equilibrium import Equilibrium, solve_equilibrium
from .errors import DomainError, NonConvergence, NoRoot, NotUnique, SimulationBudgetExceeded
from .fees import FeeMarket
from .forksim import RaceConfig, run_batch, split_seed
from .pos import compare_pos_fees, expected_attack_slots, pos_attack_cost, pos_equilibrium, simulate_pos_attack
from .scenario import Scenario

SCHEMA_VERSION = "1"
SIG_DIGITS = 12

EQUILIBRIUM_COLUMNS = ("schema_version", "miner", "cost_kind", "h", "share", "H", "D", "phi", "reward")
SWEEP_COLUMNS = (
    "schema_version",
    "row",
    "mode",
    "alpha",
    "kappa",
    "h_rent",
    "h_A",
    "h_star",
    "h_min",
    "L",
    "H",
    "D",
    "phi",
    "phi_tilde",
    "opportunity_cost",
    "C_attack",
    "net_cost",
    "net_cost_closed_form",
    "regime",
    "V_attack",
    "ic_holds",
    "d",
    "D_retarget",
    "Y_retarget",
    "sim_reps",
    "sim_net_cost",
    "sim_net_cost_se",
    "sim_duration",
    "sim_duration_se",
    "sim_fees_per_block",
    "agree_3se",
)
POS_COLUMNS = (
    "schema_version",
    "mode",
    "attacker_share",
    "S",
    "s_A",
    "phi_s",
    "phi_tilde_s",
    "L_slots",
    "C_attack",
    "staking_cost",
    "ic_holds",
    "sim_reps",
    "sim_slots",
    "sim_slots_se",
    "sim_fees_per_block",
    "sim_fees_per_block_se",
    "agree_3se",
)


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, f".{SIG_DIGITS}g")
    return str(v)


def parse_cell(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def format_rows(rows: Iterable[dict], columns: Sequence[str]) -> list[dict[str, str]]:
    return [{c: fmt(r.get(c)) for c in columns} for r in rows]


def to_csv(rows: Sequence[dict[str, str]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# Equilibrium
# --------------------------------------------------------------------------


def fee_market(s: Scenario) -> FeeMarket:
    return FeeMarket(s.sigma, s.b, s.fee_dist, s.tau, law=s.fee_law)


def scenario_equilibrium(s: Scenario) -> Equilibrium:
    return solve_equilibrium(list(s.miners), s.R, s.tau, fee_market(s), max_iter=s.max_iter)


def equilibrium_rows(s: Scenario, eq: Equilibrium) -> list[dict]:
    kinds = {m.id: type(m.cost).__name__.lower() for m in s.miners}
    return [
        {
            "schema_version": SCHEMA_VERSION,
            "miner": mid,
            "cost_kind": kinds[mid],
            "h": h,
            "share": h / eq.H,
            "H": eq.H,
            "D": eq.D,
            "phi": eq.phi,
            "reward": eq.reward,
        }
        for mid, h in sorted(eq.allocations.items())
    ]


# --------------------------------------------------------------------------
# Attack sweep
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    alpha: float | None
    kappa: float | None
    h_rent: float
    h_A: float | None
    phi_tilde: float | None
    L: float | None
    d: int | None


def sweep_points(s: Scenario) -> list[SweepPoint]:
    a = s.attack
    linear = isinstance(_attacker_cost(s), Linear)
    alphas = a.alpha if linear else (None,)
    kappas = a.kappa if linear else (None,)
    grids = (alphas, kappas, a.h_rent, a.h_A or (None,), a.phi_tilde or (None,), a.L or (None,), a.d or (None,))
    return [SweepPoint(*p) for p in itertools.product(*grids)]


def _attacker_cost(s: Scenario):
    return next(m.cost for m in s.miners if m.id == s.attack.attacker)


def _plan(s: Scenario, eq: Equilibrium, pt: SweepPoint) -> AttackPlan:
    cost = _attacker_cost(s)
    V = s.attack.V_attack
    if isinstance(cost, Linear):
        # inside share alpha of the deployed power is the attacker's own incumbent power
        if pt.h_A is not None:
            h_A = pt.h_A
        else:
            need = eq.H - 2.0 * pt.h_rent
            if not need > 0:
                raise DomainError(f"rented power {pt.h_rent} alone out-mines the honest chain; nothing to sweep")
            h_A = s.attack.margin * need / (1.0 + pt.alpha)
        return AttackPlan(
            LinearPremium(cost.c, pt.kappa, pt.alpha),
            h_star=pt.alpha * h_A,
            h_A=h_A,
            h_rent=pt.h_rent,
            V_attack=V,
            phi_tilde=pt.phi_tilde,
            base=cost,
        )
    h_star = eq.h(s.attack.attacker)
    plan = AttackPlan(cost, h_star=h_star, h_A=pt.h_A, h_rent=pt.h_rent, V_attack=V, phi_tilde=pt.phi_tilde)
    if pt.h_A is None and (pt.L is None or s.mode != "analytic"):
        r = resolve_attack_power(plan, eq)
        if r.h_used <= r.h_min * (1.0 + 1e-12):
            # bare minimum power never pulls ahead in expectation; add the safety margin
            plan = replace(plan, h_A=s.attack.margin * r.h_min)
    return plan


def _simulate(s: Scenario, eq: Equilibrium, plan: AttackPlan, h_A: float, index: int, reps: int, workers: int) -> dict:
    honest = honest_power(eq.H, plan.h_star, h_A, plan.h_rent)
    cfg = RaceConfig(
        h_A=h_A + plan.h_rent,
        honest_power=honest,
        D=eq.D,
        tau=eq.tau,
        R=eq.R,
        sigma=s.sigma,
        b=s.b,
        fee_dist=s.fee_dist,
        carryover=s.carryover,
        H=eq.H,
        seed=split_seed(s.seed, index),
        event_budget=s.event_budget,
        cost_rate=plan.cost(h_A) + plan.h_rent / eq.D * eq.reward,
    )
    if plan.phi_tilde is not None:
        # fixed attack-chain fees: credit them per block instead of simulating a mempool
        cfg = replace(cfg, R=eq.R + plan.phi_tilde, sigma=0.0)
    batch = run_batch(cfg, reps, workers=workers)
    opp_rate = opportunity_cost(plan, eq, 1.0)
    net = opp_rate * batch.samples["duration"] + batch.samples["attack_cost"]
    blocks = batch.samples["attack_blocks"].sum()
    fees = batch.samples["attack_fees"].sum()
    return {
        "sim_reps": reps,
        "sim_net_cost": float(net.mean()),
        "sim_net_cost_se": float(net.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
        "sim_duration": batch.mean("duration"),
        "sim_duration_se": batch.stderr("duration"),
        "sim_fees_per_block": float(fees / blocks) if plan.phi_tilde is None and blocks else plan.phi_tilde,
    }


def _agree(analytic: float, sim: float, se: float) -> bool:
    if math.isnan(se) or se == 0:
        return math.isclose(analytic, sim, rel_tol=1e-9, abs_tol=1e-12)
    return abs(analytic - sim) <= 3.0 * se


def sweep_rows(s: Scenario, eq: Equilibrium | None = None, *, workers: int = 1, limit: int | None = None) -> list[dict]:
    eq = scenario_equilibrium(s) if eq is None else eq
    rows = []
    sim_cache: dict = {}
    points = sweep_points(s)
    if limit is not None:
        points = points[:limit]
    for i, pt in enumerate(points):
        with _at_point(i, pt):
            rows.append(_sweep_row(s, eq, i, pt, sim_cache, workers))
    return rows


@contextmanager
def _at_point(i: int, pt: SweepPoint):
    """Prefix errors with the sweep coordinates, keeping their type."""
    try:
        yield
    except (DomainError, NoRoot, NotUnique, NonConvergence, SimulationBudgetExceeded) as exc:
        coords = ", ".join(f"{k}={v}" for k, v in vars(pt).items() if v is not None)
        exc.args = (f"sweep row {i} ({coords}): {exc}",)
        raise


def _sweep_row(s: Scenario, eq: Equilibrium, i: int, pt: SweepPoint, sim_cache: dict, workers: int) -> dict:
    plan = _plan(s, eq, pt)
    a = net_cost(plan, eq, pt.L)
    row = {
        "schema_version": SCHEMA_VERSION,
        "row": i,
        "mode": s.mode,
        "alpha": pt.alpha,
        "kappa": pt.kappa,
        "h_rent": pt.h_rent,
        "h_A": a.h_used,
        "h_star": plan.h_star,
        "h_min": a.h_min,
        "L": a.L,
        "H": eq.H,
        "D": eq.D,
        "phi": eq.phi,
        "V_attack": a.V_attack,
        "d": pt.d,
    }
    if s.mode != "simulate":
        row.update(
            phi_tilde=a.phi_tilde,
            opportunity_cost=a.opportunity_cost,
            C_attack=a.C_attack,
            net_cost=a.net_cost,
            regime=a.regime.value,
            ic_holds=a.ic_holds,
        )
        if isinstance(plan.cost, LinearPremium) and pt.h_rent == 0:
            row["net_cost_closed_form"] = linear_net_cost(
                a.h_used, eq.tau, eq.H, eq.reward, a.reward_tilde, plan.cost.kappa, plan.cost.alpha, a.L
            )
    if pt.d is not None:
        row["D_retarget"], row["Y_retarget"] = difficulty_adjust(eq.D, pt.d, a.h_used + pt.h_rent, eq.H, s.attack.epoch)
    if s.mode != "analytic":
        key = (pt.alpha, pt.kappa, pt.h_rent, pt.h_A, pt.phi_tilde)
        if key not in sim_cache:
            sim_cache[key] = _simulate(s, eq, plan, a.h_used, i, s.replications, workers)
        row.update(sim_cache[key])
        if s.mode == "simulate":
            row["phi_tilde"] = row["sim_fees_per_block"]
        elif pt.L is None:
            # only the expected-hitting-time rows are comparable with a full race
            row["agree_3se"] = _agree(a.net_cost, row["sim_net_cost"], row["sim_net_cost_se"])
    return row


# --------------------------------------------------------------------------
# Proof of Stake block
# --------------------------------------------------------------------------


def pos_rows(s: Scenario) -> list[dict]:
    if s.pos is None:
        return []
    blk = s.pos
    p = blk.attacker_share
    stakes = pos_equilibrium(blk.params, {0: p, 1: 1.0 - p})
    phi_s = blk.params.phi_s
    L_slots = expected_attack_slots(p)
    tau_s = blk.params.tau_s
    row = {
        "schema_version": SCHEMA_VERSION,
        "mode": s.mode,
        "attacker_share": p,
        "S": stakes.S,
        "s_A": stakes.stakes[0],
        "phi_s": phi_s,
        "L_slots": L_slots,
    }
    if s.mode == "analytic":
        # attack blocks arrive every tau_s / p on average
        phi_tilde = FeeMarket(blk.params.sigma, blk.params.b, blk.params.fee_dist, tau_s).per_block(tau_s / p)
    else:
        reps = s.replications
        slots = np.empty(reps)
        for k in range(reps):
            slots[k] = simulate_pos_attack(stakes, 0, blk.params, blk.horizon_slots, split_seed(s.seed, k), carryover=s.carryover).slots
        cmp = compare_pos_fees(p, blk.params, n_blocks=blk.fee_blocks, n_reps=reps, seed=s.seed, carryover=s.carryover)
        phi_tilde = cmp.mean_a
        se_fees = cmp.diff_se
        row.update(
            sim_reps=reps,
            sim_slots=float(slots.mean()),
            sim_slots_se=float(slots.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
            sim_fees_per_block=cmp.mean_a,
            sim_fees_per_block_se=se_fees,
        )
        if s.mode == "cross" and math.isfinite(L_slots):
            row["agree_3se"] = _agree(L_slots, row["sim_slots"], row["sim_slots_se"])
    if math.isfinite(L_slots):
        cost = pos_attack_cost(stakes.stakes[0], stakes.S, phi_s, phi_tilde, L_slots * tau_s, tau_s, V_attack=s.attack.V_attack, params=blk.params)
        row.update(C_attack=cost.C_attack, staking_cost=cost.staking_cost, ic_holds=cost.ic_holds)
    row["phi_tilde_s"] = phi_tilde
    return [row]


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------


def build_report(sweep: Sequence[dict[str, str]], pos: Sequence[dict[str, str]] = ()) -> str:
    """Verdict lines computed only from formatted rows."""
    rows = [{k: parse_cell(v) for k, v in r.items()} for r in sweep]
    lines = []
    mode = rows[0]["mode"] if rows else "analytic"
    lines.append(f"rows: {len(rows)} (mode {mode})")
    analytic = [r for r in rows if r.get("net_cost") is not None]
    if analytic:
        counts = {name: sum(r["regime"] == name for r in analytic) for name in ("ZeroCost", "PositiveCost", "NegativeCost")}
        lines.append("regimes: " + " ".join(f"{k}={v}" for k, v in counts.items()))
        ic = sum(bool(r["ic_holds"]) for r in analytic)
        lines.append(f"incentive compatible (net cost >= V_attack): {ic}/{len(analytic)}")
        low = min(analytic, key=lambda r: r["net_cost"])
        lines.append(f"lowest net cost: {fmt(low['net_cost'])} at row {low['row']}")
        closed = [r for r in analytic if r.get("net_cost_closed_form") is not None]
        if closed:
            ok = sum(math.isclose(r["net_cost"], r["net_cost_closed_form"], rel_tol=1e-9, abs_tol=1e-9 * max(1.0, abs(r["net_cost"]))) for r in closed)
            lines.append(f"linear closed form matches full net cost: {ok}/{len(closed)}")
    slower = [r for r in rows if r.get("phi_tilde") is not None and r["h_A"] + r["h_rent"] < r["H"]]
    if slower:
        up = sum(r["phi_tilde"] > r["phi"] for r in slower)
        eq_ = sum(r["phi_tilde"] == r["phi"] for r in slower)
        lines.append(f"attack-chain fees per block above benchmark on slower attack chains: {up}/{len(slower)} (equal: {eq_})")
    crossed = [r for r in rows if r.get("agree_3se") is not None]
    if crossed:
        ok = sum(bool(r["agree_3se"]) for r in crossed)
        lines.append(f"analytic net cost within 3 SE of simulation: {ok}/{len(crossed)}")
    for r in ({k: parse_cell(v) for k, v in p.items()} for p in pos):
        lines.append(f"pos: share {fmt(r['attacker_share'])} stake {fmt(r['S'])} expected attack slots {fmt(r['L_slots'])}")
        if r.get("C_attack") is not None:
            lines.append(f"pos: attack cost {fmt(r['C_attack'])} ic_holds={fmt(r['ic_holds'])}")
        if r.get("agree_3se") is not None:
            lines.append(f"pos: expected attack slots within 3 SE of simulation: {fmt(r['agree_3se'])}")
    return "\n".join(lines) + "\n"


def report_from_csv(sweep_path: str | Path, pos_path: str | Path | None = None) -> str:
    pos = read_csv(pos_path) if pos_path is not None and Path(pos_path).exists() else []
    return build_report(read_csv(sweep_path), pos)


@dataclass(frozen=True)
class SweepResult:
    equilibrium: list[dict[str, str]]
    sweep: list[dict[str, str]]
    pos: list[dict[str, str]]
    report: str


def run_scenario(s: Scenario, *, workers: int = 1, limit: int | None = None) -> SweepResult:
    eq = scenario_equilibrium(s)
    eq_rows = format_rows(equilibrium_rows(s, eq), EQUILIBRIUM_COLUMNS)
    sw = format_rows(sweep_rows(s, eq, workers=workers, limit=limit), SWEEP_COLUMNS)
    ps = format_rows(pos_rows(s), POS_COLUMNS)
    return SweepResult(eq_rows, sw, ps, build_report(sw, ps))


def write_outputs(res: SweepResult, out_dir: str | Path, *, name: str = "sweep") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fname, rows, cols in (
        ("equilibrium.csv", res.equilibrium, EQUILIBRIUM_COLUMNS),
        (f"{name}.csv", res.sweep, SWEEP_COLUMNS),
        ("pos.csv", res.pos, POS_COLUMNS),
    ):
        if fname == "pos.csv" and not rows:
            continue
        p = out / fname
        p.write_text(to_csv(rows, cols), encoding="utf-8")
        written.append(p)
    p = out / f"{name}_report.txt"
    p.write_text(res.report, encoding="utf-8")
    written.append(p)
    return written
