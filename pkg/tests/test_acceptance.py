"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary; running this file
directly (``python tests/test_acceptance.py``) prints them too.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import ACCEPTANCE  # noqa: E402

from majattack.attack import (  # noqa: E402
    AttackPlan,
    Regime,
    attack_cost,
    break_even_power,
    critical_incumbent_power,
    difficulty_adjust,
    min_attack_power,
    net_cost,
    outside_attack_cost,
    power_family,
)
from majattack.core import Linear, Power, Uniform  # noqa: E402
from majattack.equilibrium import MinerSpec, solve_equilibrium  # noqa: E402
from majattack.fees import FeeMarket, compare_chain_fees, second_tier_fees  # noqa: E402
from majattack.forksim import RaceConfig, run_batch, split_seed  # noqa: E402
from majattack.pos import PoSParams, compare_pos_fees, pos_attack_cost, pos_equilibrium, simulate_pos_attack  # noqa: E402
from majattack.runner import format_rows, run_scenario, scenario_equilibrium, to_csv  # noqa: E402
from majattack.scenario import load_scenario, parse_scenario  # noqa: E402

SCEN = Path(__file__).resolve().parent.parent / "scenarios"
U = Uniform(0.0, 1.0)
# congested market: tau * sigma = 4b
MARKET = FeeMarket(20.0, 5, U, 1.0)


def _csv(rows: list[dict]) -> bytes:
    cols = list(rows[0])
    return to_csv(format_rows(rows, cols), cols).encode("utf-8")


class _Record:
    def __init__(self, n: int):
        self.n = n
        self.detail = ""
        self.t0 = time.perf_counter()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        secs = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        msg = self.detail if exc is None else f"{self.detail} {type(exc).__name__}: {exc}".strip()
        ACCEPTANCE[self.n] = f"criterion {self.n:2d}: {status} ({secs:.1f} s) {msg}"
        return False


# --------------------------------------------------------------------------
# Simulated criteria; each returns the rows written out for the determinism check
# --------------------------------------------------------------------------


def run_c2() -> list[dict]:
    c = compare_chain_fees(1 / 0.6, 1.0, MARKET.sigma, U, MARKET.b, n_blocks=10, n_reps=10_000, seed=2)
    return [{"check": "inside_0.6H", "phi_tilde": c.mean_a, "phi": c.mean_b, "diff": c.diff_mean, "se": c.diff_se, "z": c.z, "reps": c.n}]


def run_c3() -> list[dict]:
    c = compare_chain_fees(1 / 1.5, 1.0, MARKET.sigma, U, MARKET.b, n_blocks=10, n_reps=10_000, seed=3)
    rows = [{"check": "outside_1.5H", "L": "", "value": c.diff_mean, "se": c.diff_se, "z": c.z, "analytic": ""}]
    phi = MARKET.per_block()
    for L in (5.0, 10.0, 20.0):
        e = second_tier_fees(L, 1.0, MARKET.sigma, U, MARKET.b, 20_000, seed=int(L))
        rows.append(
            {
                "check": "outside_cost",
                "L": L,
                "value": outside_attack_cost(1.5, phi, e.mean, L, 1.0),
                "se": e.stderr,
                "z": "",
                "analytic": outside_attack_cost(1.5, phi, MARKET.second_tier(L), L, 1.0),
            }
        )
    return rows


def run_c4() -> list[dict]:
    b = run_batch(RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, seed=4), 100_000)
    return [{"reps": 100_000, "mean_duration": b.mean("duration"), "se": b.stderr("duration")}]


def _c5_scenario(**attack):
    s = load_scenario(SCEN / "linear_cross.yaml")
    doc = s.echo()
    doc["attack"].update(attack)
    return parse_scenario(doc, "linear_cross")


def run_c5() -> list[dict]:
    return run_scenario(_c5_scenario()).sweep


def run_c10() -> list[dict]:
    params = PoSParams(tau_s=1.0, R_s=1.0, r=0.05, e_s=1.0, b=5, sigma=20.0, fee_dist=U)
    stakes = pos_equilibrium(params, {0: 0.6, 1: 0.4})
    n = 10_000
    traces = [simulate_pos_attack(stakes, 0, params, 100_000, split_seed(10, k), carryover=True) for k in range(n)]
    slots = np.array([t.slots for t in traces], dtype=float)
    attack_blocks = np.array([t.attack_blocks for t in traces], dtype=float)
    # without the attack the validator proposes in each of its own slots too
    diff = attack_blocks - stakes.share(0) * slots
    fees = compare_pos_fees(0.6, params, n_blocks=10, n_reps=n, seed=11)
    L = float(slots.mean())
    cost = pos_attack_cost(stakes.stakes[0], stakes.S, fees.mean_b, fees.mean_a, L, params.tau_s)
    return [
        {
            "share": stakes.share(0),
            "S": stakes.S,
            "finished": sum(t.finished for t in traces),
            "mean_slots": L,
            "block_diff": float(diff.mean()),
            "block_diff_se": float(diff.std(ddof=1) / math.sqrt(n)),
            "phi_s": fees.mean_b,
            "phi_tilde_s": fees.mean_a,
            "fee_z": fees.z,
            "C_attack": cost.C_attack,
            "ic_holds": cost.ic_holds,
        }
    ]


SIMULATED = {2: run_c2, 3: run_c3, 4: run_c4, 5: run_c5, 10: run_c10}
FIRST_RUN: dict[int, bytes] = {}


def _first(n: int) -> list[dict]:
    rows = SIMULATED[n]()
    FIRST_RUN[n] = _csv(rows)
    return rows


# --------------------------------------------------------------------------
# Criteria
# --------------------------------------------------------------------------


def test_criterion_01_free_entry():
    with _Record(1) as r:
        t = time.perf_counter()
        eq = solve_equilibrium([MinerSpec(i, Linear(1.0)) for i in range(3)], 100.0, 1.0, phi=0.0)
        secs = time.perf_counter() - t
        r.detail = f"H={eq.H:.12g}"
        assert abs(eq.H - 100.0) <= 1e-6 * 100.0
        assert secs < 1.0


def test_criterion_02_inside_attack_fees():
    with _Record(2) as r:
        t = time.perf_counter()
        (row,) = _first(2)
        r.detail = f"phi_tilde={row['phi_tilde']:.6g} phi={row['phi']:.6g} z={row['z']:.1f} reps={row['reps']}"
        assert row["z"] > 2.3263478740408408  # one-sided 99%
        assert row["reps"] >= 10_000
        assert time.perf_counter() - t < 60


def test_criterion_03_outside_attack_reversal():
    with _Record(3) as r:
        t = time.perf_counter()
        rows = _first(3)
        rev, costs = rows[0], rows[1:]
        r.detail = f"z={rev['z']:.1f} outside cost " + ", ".join(f"L={c['L']:g}: {c['value']:.4f}+-{c['se']:.4f}" for c in costs)
        assert rev["z"] < -2.3263478740408408
        for c in costs:
            assert c["value"] - 3 * c["se"] > 0
            assert c["analytic"] > 0
            assert abs(c["value"] - c["analytic"]) <= 3.5 * c["se"]
        vals = [c["value"] for c in costs]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert time.perf_counter() - t < 120


def test_criterion_04_race_duration():
    with _Record(4) as r:
        t = time.perf_counter()
        (row,) = _first(4)
        r.detail = f"mean={row['mean_duration']:.5f} se={row['se']:.4f} oracle=5"
        assert abs(row["mean_duration"] - 1 / (0.6 - 0.4)) <= 0.02 * 5.0
        assert time.perf_counter() - t < 60


def test_criterion_05_linear_cross_validation():
    with _Record(5) as r:
        rows = _first(5)
        assert len(rows) == 9
        agree = sum(row["agree_3se"] == "true" for row in rows)
        # forced equal fees: the alpha = 1 and kappa = 1 points must vanish
        eq_phi = scenario_equilibrium(_c5_scenario()).phi
        flat = run_scenario(_flat(eq_phi)).sweep
        zeros = [row for row in flat if float(row["alpha"]) == 1.0 or float(row["kappa"]) == 1.0]
        worst = max(abs(float(row["net_cost"])) for row in zeros)
        r.detail = f"{agree}/9 grid points within 3 SE; max |net cost| at forced equal fees {worst:.3g} over {len(zeros)} points"
        assert agree == 9
        assert len(zeros) == 5
        assert worst <= 1e-9


def _flat(phi):
    s = _c5_scenario(phi_tilde=[phi])
    doc = s.echo()
    doc["mode"] = "analytic"
    return parse_scenario(doc, "linear_flat")


def test_criterion_06_sign_trichotomy():
    with _Record(6) as r:
        eq = solve_equilibrium([MinerSpec(0, Power(1 / 160, 2.0)), MinerSpec(1, Linear(1.0))], 50.0, 1.0, phi=50.0)
        gap = eq.phi  # block reward is the same on both chains, so only fees differ
        out = []
        for k in (0.8, 1.0, 1.2):
            a = net_cost(AttackPlan(Power(1 / 160, 2.0), h_star=eq.h(0), phi_tilde=k * gap), eq)
            assert a.h_used > a.h_min  # minimum power does not bind
            out.append(a.regime)
        r.detail = " ".join(x.value for x in out)
        assert out == [Regime.POSITIVE, Regime.ZERO, Regime.NEGATIVE]


def test_criterion_07_critical_incumbent_power():
    with _Record(7) as r:
        R, H = 1.0, 100.0
        reward = R + MARKET.per_block()
        rt = lambda h: R + MARKET.per_block(H / h)
        fam = power_family(2.0, H, reward)
        h_hat = critical_incumbent_power(fam, H, 1.0, reward, rt)
        resid = h_hat + break_even_power(fam(h_hat), H, reward, rt, h_hat) - H
        hs = 1.05 * h_hat
        eq = solve_equilibrium([MinerSpec(0, fam(hs)), MinerSpec(1, Linear(reward / H))], R, 1.0, MARKET)
        h_min = min_attack_power(hs, eq.H)
        # at exactly h_min the race never pulls ahead in expectation, so fix the length
        a = net_cost(AttackPlan(fam(hs), h_star=hs, h_A=h_min), eq, L=10.0)
        r.detail = f"h_hat={h_hat:.6g} residual={resid:.2g} net cost at 1.05 h_hat={a.net_cost:.6g}"
        assert h_hat < H / 2
        assert abs(resid) <= 1e-6 * H
        assert eq.h(0) == pytest.approx(hs, rel=1e-9)
        assert a.net_cost < 0


def test_criterion_08_renting():
    with _Record(8) as r:
        eq = solve_equilibrium([MinerSpec(0, Linear(1.0))], 50.0, 1.0, phi=50.0)
        phi_t = 55.0
        worst = -math.inf
        for cost in (Linear(1.0), Power(1 / 160, 2.0)):
            for hs in (1.0, 10.0, 30.0, 49.0):
                h_rent = eq.H / 2 - hs + 0.5
                a = net_cost(AttackPlan(cost, h_star=hs, h_A=hs, h_rent=h_rent, phi_tilde=phi_t), eq)
                no_rent = attack_cost(AttackPlan(cost, h_star=hs, h_A=hs, phi_tilde=phi_t), eq, a.L)
                assert a.C_attack < no_rent
                assert a.net_cost < 0 and not a.ic_holds
                worst = max(worst, a.net_cost)
        r.detail = f"largest net cost with renting {worst:.6g} (8 cases)"


def test_criterion_09_difficulty_adjustment():
    with _Record(9) as r:
        D_full, Y_full = difficulty_adjust(100.0, 2600, 60.0, 100.0)
        D_half, _ = difficulty_adjust(100.0, 1300, 60.0, 100.0)
        target = 100.0 * 2600 / (1300 + 1300 * 100.0 / 60.0)
        assert Y_full == 1.0
        assert abs(D_half - target) <= 1e-9
        n = 0
        for h_A in np.linspace(10.0, 200.0, 39):
            for d in (1, 650, 1300, 2599, 2600):
                Dp, _ = difficulty_adjust(100.0, d, float(h_A), 100.0)
                assert (Dp < 100.0) == (h_A < 100.0)
                n += 1
        r.detail = f"Y'={Y_full:g} D'={D_half:.12g} target={target:.12g} direction ok on {n} points"


def test_criterion_10_pos():
    with _Record(10) as r:
        t = time.perf_counter()
        (row,) = _first(10)
        r.detail = (
            f"block diff={row['block_diff']:.4f}+-{row['block_diff_se']:.4f} fee z={row['fee_z']:.1f} "
            f"C_attack={row['C_attack']:.6g}"
        )
        assert row["finished"] == 10_000
        assert abs(row["block_diff"]) <= 3 * row["block_diff_se"]
        assert row["fee_z"] > 2.3263478740408408
        assert row["C_attack"] < 0 and not row["ic_holds"]
        assert time.perf_counter() - t < 60


def test_criterion_11_determinism():
    with _Record(11) as r:
        same = []
        for n, fn in SIMULATED.items():
            first = FIRST_RUN.get(n) or _csv(fn())
            same.append(_csv(fn()) == first)
        r.detail = f"{sum(same)}/{len(same)} simulated criteria byte-identical on rerun"
        assert all(same)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
