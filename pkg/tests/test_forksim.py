import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from majattack.core import Linear, Uniform
from majattack.errors import DomainError, SimulationBudgetExceeded
from majattack.forksim import (
    EntryDelayed,
    EntryImmediate,
    Escrow,
    LeadByOne,
    PaperRetarget,
    RaceConfig,
    _HonestPower,
    entry_cap,
    heaviest_chain,
    run_batch,
    run_race,
    split_seed,
)


def _absorbing_chain_mean_time(lam_a, lam_h, depth=400):
    """Expected time for the lead to go from 0 to +1: solve the truncated
    linear system over lead states -depth..0."""
    p = lam_a / (lam_a + lam_h)
    n = depth + 1  # states lead = -depth .. 0
    A = np.zeros((n, n))
    rhs = np.full(n, 1.0 / (lam_a + lam_h))
    for i in range(n):
        A[i, i] = 1.0
        if i + 1 < n:
            A[i, i + 1] -= p
        # up from lead 0 is absorption
        if i - 1 >= 0:
            A[i, i - 1] -= 1 - p
        else:
            A[i, i] -= 1 - p  # reflecting floor, negligible at this depth
    return np.linalg.solve(A, rhs)[-1]


def test_hitting_time_oracles_agree():
    assert _absorbing_chain_mean_time(0.6, 0.4) == pytest.approx(1 / (0.6 - 0.4), rel=1e-10)


def test_mean_duration():
    cfg = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, seed=3)
    b = run_batch(cfg, 20_000)
    assert abs(b.mean("duration") - 5.0) <= 3 * b.stderr("duration")


def test_attack_block_count_follows_wald():
    cfg = RaceConfig(h_A=70.0, honest_power=30.0, D=100.0, seed=4)
    b = run_batch(cfg, 20_000)
    # every block of the private branch takes D/h_A on average
    diff = b.samples["attack_blocks"] - b.samples["duration"] * 0.7
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / math.sqrt(len(diff))


def test_determinism_and_seed_sensitivity():
    cfg = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, R=1.0, sigma=20.0, b=5, fee_dist=Uniform(0, 1), seed=9)
    assert run_race(cfg) == run_race(cfg)
    runs = {run_race(replace(cfg, seed=s)).duration for s in range(5)}
    assert len(runs) == 5


def test_batch_is_order_independent():
    cfg = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, seed=2)
    one = run_batch(cfg, 200)
    two = run_batch(cfg, 200, workers=2)
    for name in one.samples:
        assert np.array_equal(one.samples[name], two.samples[name])
    perm = np.random.default_rng(0).permutation(200)
    assert np.mean(one.samples["duration"][perm]) == pytest.approx(one.mean("duration"), rel=1e-12)
    assert split_seed(2, 0) != split_seed(2, 1)


@given(st.integers(1, 30), st.integers(0, 10_000), st.floats(51.0, 90.0))
@settings(max_examples=40, deadline=None)
def test_escrow_block_count(w, seed, h_A):
    cfg = RaceConfig(h_A=h_A, honest_power=100.0 - h_A, D=100.0, stop=Escrow(w), attacker_cost=Linear(1.0), seed=seed)
    tr = run_race(cfg)
    assert tr.honest_blocks >= w
    assert tr.attack_blocks == max(w + 1, tr.honest_blocks + 1)
    assert tr.active_time <= tr.duration + 1e-12
    assert tr.mining_cost == pytest.approx(h_A * tr.active_time, rel=1e-12)


def test_lead_by_one_ends_one_block_ahead():
    for seed in range(50):
        tr = run_race(RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, stop=LeadByOne(), seed=seed))
        assert tr.attack_blocks == tr.honest_blocks + 1
        assert tr.active_time == tr.duration


def test_fee_accounting_in_race():
    cfg = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, R=2.0, sigma=20.0, b=5, fee_dist=Uniform(0, 1), attacker_cost=Linear(1.0), seed=1)
    tr = run_race(cfg)
    assert tr.attack_fees + tr.attack_pool_left == pytest.approx(tr.arrived_fees, rel=1e-12)
    assert tr.attack_cost == pytest.approx(tr.mining_cost - tr.attack_blocks * 2.0 - tr.attack_fees, rel=1e-12)
    windowed = run_race(replace(cfg, carryover=False))
    total = windowed.attack_fees + windowed.attack_pool_left + windowed.attack_fees_discarded
    assert total == pytest.approx(windowed.arrived_fees, rel=1e-12)


def test_no_fees_without_congestion():
    tr = run_race(RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, sigma=4.0, b=5, fee_dist=Uniform(0, 1), seed=1))
    assert tr.attack_fees == 0.0 and tr.arrived_fees == 0.0


def test_retarget_difficulty():
    cfg = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, stop=Escrow(1500), retarget=PaperRetarget(1300), H=100.0)
    vals = []
    for k in range(40):
        tr = run_race(replace(cfg, seed=split_seed(5, k)))
        ev = [e for e in tr.retarget_events if e.chain == "attack"]
        assert len(ev) == 1
        vals.append(ev[0].difficulty)
    vals = np.array(vals)
    target = 100.0 * 2600 / (1300 + 1300 * 100.0 / 60.0)
    assert abs(vals.mean() - target) <= 3 * vals.std(ddof=1) / math.sqrt(len(vals)) + 0.05
    assert target == pytest.approx(75.0)


def test_heaviest_chain_rule():
    assert heaviest_chain([(4, 100.0)], [(5, 75.0)]) == 0
    assert heaviest_chain([(4, 100.0)], [(5, 81.0)]) == 1
    assert heaviest_chain([(3, 100.0)], [(4, 75.0)]) == 0  # tie keeps the incumbent


def test_entry_flags():
    base = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, H=100.0)
    assert base.guaranteed
    assert not replace(base, entry=EntryImmediate()).guaranteed
    assert replace(base, h_A=120.0, entry=EntryImmediate()).guaranteed
    assert not replace(base, entry=EntryDelayed(rate=1.0)).guaranteed
    assert replace(base, entry=EntryDelayed(rate=1.0, cap=55.0)).guaranteed


@given(st.floats(1.0, 50.0), st.floats(0.01, 10.0), st.floats(0.0, 20.0), st.floats(0.1, 500.0))
def test_honest_work_integral(p0, rate, t, work):
    cfg = RaceConfig(h_A=200.0, honest_power=p0, D=100.0, H=100.0, entry=EntryDelayed(rate))
    hp = _HonestPower(cfg)
    t1 = hp.next_event(t, work)
    grid = np.linspace(t, t1, 20_001)
    integral = np.trapezoid([hp.at(x) for x in grid], grid)
    assert integral == pytest.approx(work, rel=1e-4)


def test_delayed_entry_lengthens_race():
    base = RaceConfig(h_A=60.0, honest_power=40.0, D=100.0, H=100.0, seed=7)
    plain = run_batch(base, 3000).mean("duration")
    slowed = run_batch(replace(base, entry=EntryDelayed(rate=1.0, cap=55.0)), 3000).mean("duration")
    assert slowed > plain


def test_entry_cap():
    # fees per block proportional to the interval: per-hash revenue 0.5 + 100/P
    fees = lambda interval: 100.0 * interval
    assert entry_cap(1.5, 100.0, 50.0, fees, 150.0) == pytest.approx(100.0, rel=1e-9)
    assert entry_cap(1.0, 100.0, 50.0, fees, 150.0) == 150.0
    # with flat fees revenue per hash does not fall as entrants arrive
    assert entry_cap(1.0, 100.0, 50.0, lambda interval: 0.0, 150.0) == 0.0


def test_budget_exceeded_reports_replication():
    cfg = RaceConfig(h_A=30.0, honest_power=70.0, D=100.0, event_budget=50, seed=1)
    with pytest.raises(SimulationBudgetExceeded) as exc:
        run_batch(cfg, 20)
    assert exc.value.run_index is not None
    assert str(exc.value).startswith(f"replication {exc.value.run_index}")


def test_config_validation():
    with pytest.raises(DomainError):
        RaceConfig(h_A=0.0, honest_power=1.0, D=1.0)
    with pytest.raises(DomainError):
        Escrow(0)
    with pytest.raises(DomainError):
        run_batch(RaceConfig(h_A=1.0, honest_power=0.5, D=1.0), 0)
