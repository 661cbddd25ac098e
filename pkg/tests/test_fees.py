import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from majattack.core import Degenerate, Empirical, Exponential, Uniform
from majattack.errors import DomainError
from majattack.fees import (
    ArrivalStream,
    FeeMarket,
    Mempool,
    Multiplicative,
    NoAdjust,
    Transaction,
    compare_chain_fees,
    count_pmf,
    expected_fees_per_block,
    fees_per_block,
    observed_interval,
    replay_chain,
    second_tier_expected,
    second_tier_fees,
    simulate_mempool,
)

U = Uniform(0.0, 1.0)


def test_four_uniform_arrivals_top_two():
    assert fees_per_block(1.0, 4.0, U, 2, law="fixed") == pytest.approx(2 - 6 / 10, rel=1e-12)


def test_zero_fees_without_congestion():
    assert fees_per_block(3.0, 4.0, U, 5, tau=1.0) == 0.0
    assert second_tier_expected(10.0, 1.0, 4.0, U, 5) == 0.0
    assert expected_fees_per_block(3.0, 4.0, U, 5, 100, tau=1.0).mean == 0.0


@pytest.mark.parametrize("law", ["poisson", "geometric", "fixed"])
def test_count_pmf_normalised(law):
    ns, ps = count_pmf(7.3, law)
    assert ps.sum() == pytest.approx(1.0, abs=1e-9)
    if law != "fixed":
        assert (ns * ps).sum() == pytest.approx(7.3, rel=1e-6)


@pytest.mark.parametrize("law", ["poisson", "geometric", "fixed"])
@pytest.mark.parametrize("dist", [U, Exponential(0.4), Empirical((0.1, 0.5, 0.5, 2.0))], ids=lambda d: type(d).__name__)
def test_closed_form_matches_monte_carlo(law, dist):
    exact = fees_per_block(1.5, 8.0, dist, 3, law=law)
    mc = expected_fees_per_block(1.5, 8.0, dist, 3, 40_000, seed=9, counts=law)
    assert abs(exact - mc.mean) <= 3.5 * mc.stderr + 1e-12


def test_second_tier_matches_sorting_oracle():
    # tau*sigma = 2b, L = 10 tau, fixed arrival count
    b, sigma, tau, L = 3, 6.0, 1.0, 10.0
    exact = second_tier_expected(L, tau, sigma, U, b, law="fixed")
    rng = np.random.default_rng(4)
    n = int(sigma * L)
    draws = -np.sort(-rng.uniform(size=(100_000, n)), axis=1)
    vals = draws[:, 10 * b : 11 * b].sum(axis=1)
    assert abs(exact - vals.mean()) <= 3.5 * vals.std(ddof=1) / math.sqrt(len(vals))
    # closed form for uniforms: ranks j have mean (n + 1 - j) / (n + 1)
    assert exact == pytest.approx(sum((n + 1 - j) / (n + 1) for j in range(31, 34)), rel=1e-12)
    mc = second_tier_fees(L, tau, sigma, U, b, 20_000, seed=1, counts="fixed")
    assert abs(exact - mc.mean) <= 3.5 * mc.stderr


def test_second_tier_grows_with_attack_length():
    vals = [second_tier_expected(L, 1.0, 20.0, U, 5) for L in (5.0, 10.0, 20.0, 40.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    mc = [second_tier_fees(L, 1.0, 20.0, U, 5, 20_000, seed=2) for L in (5.0, 10.0)]
    assert mc[1].mean >= mc[0].mean - 3 * math.hypot(mc[0].stderr, mc[1].stderr)


@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.integers(1, 6), st.floats(2.0, 15.0))
@settings(max_examples=40, deadline=None)
def test_fees_per_block_increase_with_interval(i1, i2, b, sigma):
    lo, hi = sorted((i1, i2))
    assert fees_per_block(lo, sigma, U, b) <= fees_per_block(hi, sigma, U, b) + 1e-12


def test_degenerate_fees_do_not_depend_on_interval_when_pool_never_empties():
    d = Degenerate(0.3)
    # with many arrivals the block is always full
    a = fees_per_block(5.0, 40.0, d, 3)
    b = fees_per_block(10.0, 40.0, d, 3)
    assert a == pytest.approx(0.9, rel=1e-9) and b == pytest.approx(0.9, rel=1e-9)


def test_mempool_orders_by_fee_then_arrival():
    pool = Mempool()
    for seq, (t, f) in enumerate([(0.1, 0.5), (0.2, 0.9), (0.3, 0.5), (0.4, 0.1)]):
        pool.push(Transaction(t, f, seq))
    top = pool.pop_top(3)
    assert [tx.fee for tx in top] == [0.9, 0.5, 0.5]
    assert [tx.arrival_time for tx in top[1:]] == [0.1, 0.3]
    assert pool.total_fees == pytest.approx(0.1)
    assert len(pool) == 1


@given(st.integers(0, 10_000), st.integers(1, 5), st.booleans())
@settings(max_examples=40, deadline=None)
def test_fee_conservation(seed, b, carryover):
    rng = np.random.default_rng(seed)
    stream = ArrivalStream.generate(rng, 20.0, 3.0, Exponential(1.0))
    times = np.cumsum(rng.exponential(1.0, 12))
    times = times[times <= 20.0]
    r = replay_chain(stream, times, b, carryover=carryover)
    seen = stream.fees[stream.times <= (times[-1] if len(times) else -1)].sum()
    assert r.arrived_fees == pytest.approx(seen, rel=1e-12, abs=1e-12)
    assert r.extracted_fees + r.remaining_fees + r.discarded_fees == pytest.approx(r.arrived_fees, rel=1e-12, abs=1e-12)
    assert all(n <= b for n in r.block_sizes)


def test_simulated_block_matches_expected_fees():
    interval, sigma, b = 2.0, 5.0, 3
    vals = np.array([simulate_mempool(s, interval, [interval], b, sigma, U)[0] for s in range(20_000)])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - fees_per_block(interval, sigma, U, b)) <= 3 * se


def test_simulate_mempool_shared_stream_and_determinism():
    a = simulate_mempool(3, 10.0, [1.0, 2.0, 3.0], 2, 4.0, U)
    assert a == simulate_mempool(3, 10.0, [1.0, 2.0, 3.0], 2, 4.0, U)
    slow = simulate_mempool(3, 10.0, [2.0, 4.0, 6.0], 2, 4.0, U)
    assert sum(slow) >= sum(a) - 1e-12  # same stream, later blocks see a superset
    with pytest.raises(DomainError):
        simulate_mempool(3, 5.0, [6.0], 2, 4.0, U)


def test_windowed_pool_discards_leftovers():
    rng = np.random.default_rng(0)
    stream = ArrivalStream.generate(rng, 10.0, 10.0, U)
    kept = replay_chain(stream, [5.0, 10.0], 2, carryover=True)
    dropped = replay_chain(stream, [5.0, 10.0], 2, carryover=False)
    assert dropped.discarded_fees > 0
    assert kept.discarded_fees == 0


def test_slower_chain_collects_more_per_block():
    res = compare_chain_fees(1.0 / 0.6, 1.0, 4.0, U, 1, n_blocks=5, n_reps=3000, seed=7)
    assert res.greater(0.99)


def test_faster_chain_collects_less_per_block():
    res = compare_chain_fees(1.0 / 1.5, 1.0, 4.0, U, 1, n_blocks=5, n_reps=3000, seed=8)
    assert res.less(0.99)


def test_bid_adjustment_raises_fees_when_public_chain_slows():
    flat = compare_chain_fees(2.0, 2.0, 4.0, U, 1, n_blocks=5, n_reps=500, seed=1)
    bumped = compare_chain_fees(2.0, 2.0, 4.0, U, 1, n_blocks=5, n_reps=500, seed=1, bid_policy=Multiplicative(0.5))
    assert bumped.mean_b > flat.mean_b
    assert Multiplicative(0.5).adjust(1.0, 3.0, 1.0) == pytest.approx(2.0)
    assert Multiplicative(0.5).adjust(1.0, 0.5, 1.0) == 1.0
    assert NoAdjust().adjust(0.7, 9.0, 1.0) == 0.7
    assert observed_interval(6.0, 0) == 6.0 and observed_interval(6.0, 3) == 2.0


def test_fee_market_bundle():
    m = FeeMarket(20.0, 5, U, 1.0)
    assert m.congested
    assert m.per_block() == fees_per_block(1.0, 20.0, U, 5)
    assert m.per_block(2.0) > m.per_block()
    assert m.second_tier(10.0) == second_tier_expected(10.0, 1.0, 20.0, U, 5)
    assert m.with_law("geometric").law == "geometric"
    with pytest.raises(DomainError):
        FeeMarket(20.0, 5, U, 1.0, law="bogus")
