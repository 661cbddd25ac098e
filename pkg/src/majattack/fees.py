"""Unit-size transaction arrivals, top-b block filling and per-block fee curves.

Two routes to the same quantities live here.  ``fees_per_block`` and
``second_tier_expected`` mix closed-form order-statistic sums over the
arrival-count law and are deterministic (smooth in the interval), which the
analytic layer needs for root finding.  ``expected_fees_per_block`` and
``second_tier_fees`` are seeded Monte Carlo estimators that only sample.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import stats

from .core import Degenerate, FeeDistribution
from .errors import DomainError

COUNT_LAWS = ("poisson", "fixed", "geometric")
_TAIL = 1e-15
_MAX_SUPPORT = 4096


@dataclass(frozen=True)
class FeeEstimate:
    mean: float
    stderr: float
    n: int

    def __float__(self):
        return self.mean


def _uncongested(tau: float | None, sigma: float, b: int) -> bool:
    return tau is not None and tau * sigma <= b


# --------------------------------------------------------------------------
# Arrival-count laws
# --------------------------------------------------------------------------


def count_pmf(mean: float, law: str = "poisson") -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of the number of arrivals in one block.

    ``poisson``: fixed interval; ``geometric``: exponentially distributed
    interval (Poisson mixed over an exponential); ``fixed``: exactly
    ``round(mean)`` arrivals.  Supports wider than ``_MAX_SUPPORT`` points
    are binned, each bin represented by its midpoint count.
    """
    if mean < 0:
        raise DomainError("mean arrival count must be >= 0")
    if law == "fixed" or mean == 0:
        return np.array([int(round(mean))]), np.array([1.0])
    if law == "poisson":
        lo = int(stats.poisson.ppf(_TAIL, mean))
        hi = int(stats.poisson.isf(_TAIL, mean)) + 1
        if hi - lo + 1 <= _MAX_SUPPORT:
            ns = np.arange(lo, hi + 1)
            return ns, stats.poisson.pmf(ns, mean)
        edges = np.unique(np.rint(np.linspace(lo, hi + 1, _MAX_SUPPORT + 1)).astype(np.int64))
        cdf = lambda k: stats.poisson.cdf(k - 1, mean)
    elif law == "geometric":
        q = mean / (1.0 + mean)
        hi = int(math.ceil(math.log(_TAIL) / math.log(q))) + 1
        if hi + 1 <= _MAX_SUPPORT:
            ns = np.arange(0, hi + 1)
            return ns, (1.0 - q) * q**ns
        # exact for small counts, log-spaced bins above
        head = _MAX_SUPPORT // 4
        tail = np.geomspace(head, hi + 1, _MAX_SUPPORT - head + 1)
        edges = np.unique(np.concatenate([np.arange(head), np.rint(tail).astype(np.int64)]))
        cdf = lambda k: -np.expm1(k * math.log(q))  # P(N < k)
    else:
        raise DomainError(f"unknown arrival-count law {law!r}; expected one of {COUNT_LAWS}")
    mass = np.diff(cdf(edges))
    mids = np.rint(0.5 * (edges[:-1] + edges[1:] - 1)).astype(np.int64)
    return mids, mass


def sample_counts(rng: np.random.Generator, mean: float, law: str, size: int) -> np.ndarray:
    if law == "fixed":
        return np.full(size, int(round(mean)), dtype=np.int64)
    if law == "poisson":
        return rng.poisson(mean, size=size)
    if law == "geometric":
        return rng.poisson(rng.exponential(mean, size=size))
    raise DomainError(f"unknown arrival-count law {law!r}")


@lru_cache(maxsize=4096)
def _mixed_top_sum(dist: FeeDistribution, mean_count: float, law: str, start_blocks: int, b: int) -> float:
    ns, ps = count_pmf(mean_count, law)
    total = 0.0
    for n, p in zip(ns.tolist(), ps.tolist()):
        if p == 0.0:
            continue
        total += p * dist.top_sum(n, start_blocks * b, b)
    return total


# --------------------------------------------------------------------------
# Deterministic fee curves
# --------------------------------------------------------------------------


def fees_per_block(
    interval: float,
    sigma: float,
    fee_dist: FeeDistribution,
    b: int,
    *,
    tau: float | None = None,
    law: str = "poisson",
) -> float:
    """Expected top-``b`` fee total of the arrivals over one block interval.

    With ``tau`` given and ``tau * sigma <= b`` users have no reason to bid,
    so the result is exactly zero.
    """
    if not interval > 0:
        raise DomainError("block interval must be > 0")
    if _uncongested(tau, sigma, b):
        return 0.0
    return _mixed_top_sum(fee_dist, float(sigma * interval), law, 0, int(b))


def second_tier_expected(
    L: float,
    tau: float,
    sigma: float,
    fee_dist: FeeDistribution,
    b: int,
    *,
    law: str = "poisson",
) -> float:
    """Expected fees of the best ``b`` transactions left after ``floor(L/tau)``
    full blocks were taken from everything that arrived over ``L``."""
    if not L > 0:
        raise DomainError("attack length must be > 0")
    if _uncongested(tau, sigma, b):
        return 0.0
    k = int(math.floor(L / tau + 1e-12))
    return _mixed_top_sum(fee_dist, float(sigma * L), law, k, int(b))


# --------------------------------------------------------------------------
# Monte Carlo estimators
# --------------------------------------------------------------------------


def _ranked_window_sums(
    rng: np.random.Generator,
    counts: np.ndarray,
    fee_dist: FeeDistribution,
    start: int,
    b: int,
    chunk_elems: int = 4_000_000,
) -> np.ndarray:
    """Per-sample sums of descending ranks ``start+1..start+b``."""
    out = np.zeros(len(counts))
    width = int(counts.max()) if len(counts) else 0
    if width <= start:
        return out
    rows = max(1, chunk_elems // width)
    for lo in range(0, len(counts), rows):
        c = counts[lo : lo + rows]
        draws = fee_dist.sample(rng, int(c.sum()))
        # zero padding is harmless because every fee is >= 0
        mat = np.zeros((len(c), width))
        mask = np.arange(width)[None, :] < c[:, None]
        mat[mask] = draws
        mat = -np.sort(-mat, axis=1)
        out[lo : lo + len(c)] = mat[:, start : start + b].sum(axis=1)
    return out


def _estimate(values: np.ndarray) -> FeeEstimate:
    n = len(values)
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return FeeEstimate(float(values.mean()), se, n)


def expected_fees_per_block(
    interval: float,
    sigma: float,
    fee_dist: FeeDistribution,
    b: int,
    n_samples: int = 10_000,
    seed: int = 0,
    *,
    tau: float | None = None,
    counts: str = "poisson",
) -> FeeEstimate:
    """Monte Carlo estimate of E[sum of top-``b`` fees] over one interval.

    ``counts`` selects the arrival-count law (see :func:`count_pmf`); the
    ``fixed`` law pins the count at ``round(sigma * interval)``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if not interval > 0:
        raise DomainError("block interval must be > 0")
    if _uncongested(tau, sigma, b):
        return FeeEstimate(0.0, 0.0, n_samples)
    rng = np.random.default_rng(seed)
    n = sample_counts(rng, sigma * interval, counts, n_samples)
    return _estimate(_ranked_window_sums(rng, n, fee_dist, 0, b))


def second_tier_fees(
    L: float,
    tau: float,
    sigma: float,
    fee_dist: FeeDistribution,
    b: int,
    n_samples: int = 10_000,
    seed: int = 0,
    *,
    counts: str = "poisson",
) -> FeeEstimate:
    """Monte Carlo estimate of the second-tier block value after an attack of length ``L``."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if not L > 0:
        raise DomainError("attack length must be > 0")
    if _uncongested(tau, sigma, b):
        return FeeEstimate(0.0, 0.0, n_samples)
    rng = np.random.default_rng(seed)
    k = int(math.floor(L / tau + 1e-12))
    n = sample_counts(rng, sigma * L, counts, n_samples)
    return _estimate(_ranked_window_sums(rng, n, fee_dist, k * b, b))


# --------------------------------------------------------------------------
# Mempool
# --------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Transaction:
    arrival_time: float
    fee: float
    seq: int = 0


class Mempool:
    """Pending transactions, extracted by fee (desc), then arrival, then sequence."""

    def __init__(self, txs: Iterable[Transaction] = ()):
        self._heap: list[tuple[float, float, int, Transaction]] = []
        self.total_fees = 0.0
        for tx in txs:
            self.push(tx)

    def __len__(self):
        return len(self._heap)

    def push(self, tx: Transaction) -> None:
        if tx.fee < 0:
            raise DomainError("transaction fee must be >= 0")
        heapq.heappush(self._heap, (-tx.fee, tx.arrival_time, tx.seq, tx))
        self.total_fees += tx.fee

    def pop_top(self, b: int) -> list[Transaction]:
        out = []
        for _ in range(min(b, len(self._heap))):
            tx = heapq.heappop(self._heap)[3]
            self.total_fees -= tx.fee
            out.append(tx)
        return out

    def clear(self) -> None:
        self._heap.clear()
        self.total_fees = 0.0

    def fees(self) -> list[float]:
        return [-k[0] for k in sorted(self._heap)]


# --------------------------------------------------------------------------
# Bid adjustment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoAdjust:
    def adjust(self, fee: float, observed_interval: float, tau: float) -> float:
        return fee


@dataclass(frozen=True)
class Multiplicative:
    """Users scale bids up by ``1 + beta * max(0, Y/tau - 1)`` where ``Y`` is
    the mean block interval they observe on the public chain."""

    beta: float = 0.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise DomainError("beta must be >= 0")

    def adjust(self, fee: float, observed_interval: float, tau: float) -> float:
        return fee * (1.0 + self.beta * max(0.0, observed_interval / tau - 1.0))


BidAdjustPolicy = Union[NoAdjust, Multiplicative]


def observed_interval(t: float, n_blocks: int, start: float = 0.0) -> float:
    """Users' estimate of the public chain's mean block interval at time ``t``."""
    return (t - start) / max(n_blocks, 1)


# --------------------------------------------------------------------------
# Arrival streams and replay
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ArrivalStream:
    times: np.ndarray
    fees: np.ndarray
    horizon: float

    @classmethod
    def generate(cls, rng: np.random.Generator, horizon: float, sigma: float, fee_dist: FeeDistribution):
        n = int(rng.poisson(sigma * horizon)) if sigma > 0 and horizon > 0 else 0
        times = np.sort(rng.uniform(0.0, horizon, size=n))
        return cls(times, fee_dist.sample(rng, n), horizon)

    def __len__(self):
        return len(self.times)


@dataclass
class ChainReplay:
    block_fees: list[float]
    block_sizes: list[int]
    arrived_fees: float
    remaining_fees: float
    discarded_fees: float = 0.0

    @property
    def extracted_fees(self) -> float:
        return float(sum(self.block_fees))


def replay_chain(
    stream: ArrivalStream,
    block_times: Sequence[float],
    b: int,
    *,
    bid_policy: BidAdjustPolicy | None = None,
    tau: float = 1.0,
    carryover: bool = True,
    observer_times: Sequence[float] | None = None,
) -> ChainReplay:
    """Fill blocks confirmed at ``block_times`` from ``stream``.

    With ``carryover`` the pool persists across blocks; otherwise each block
    only sees what arrived since the previous one.  Bids are adjusted against
    the public chain whose block times are ``observer_times`` (defaults to
    this chain).
    """
    times = np.asarray(block_times, dtype=float)
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise DomainError("block times must be strictly increasing")
    policy = bid_policy or NoAdjust()
    public = np.asarray(block_times if observer_times is None else observer_times, dtype=float)
    adjusting = not isinstance(policy, NoAdjust)

    pool = Mempool()
    fees_out: list[float] = []
    sizes: list[int] = []
    arrived = 0.0
    discarded = 0.0
    cut = np.searchsorted(stream.times, times, side="right")
    i = 0
    at = stream.times.tolist()
    af = stream.fees.tolist()
    for blk, j in enumerate(cut.tolist()):
        while i < j:
            fee = af[i]
            if adjusting:
                n_seen = int(np.searchsorted(public, at[i], side="right"))
                fee = policy.adjust(fee, observed_interval(at[i], n_seen), tau)
            pool.push(Transaction(at[i], fee, i))
            arrived += fee
            i += 1
        txs = pool.pop_top(b)
        fees_out.append(sum(tx.fee for tx in txs))
        sizes.append(len(txs))
        if not carryover:
            discarded += pool.total_fees
            pool.clear()
    return ChainReplay(fees_out, sizes, arrived, pool.total_fees, discarded)


def simulate_mempool(
    seed: int,
    horizon: float,
    block_times: Sequence[float],
    b: int,
    sigma: float,
    fee_dist: FeeDistribution,
    bid_policy: BidAdjustPolicy | None = None,
    *,
    tau: float = 1.0,
    carryover: bool = True,
) -> list[float]:
    """Per-block fee totals for blocks confirmed at ``block_times``.

    The arrival stream depends only on ``(seed, horizon, sigma, fee_dist)``,
    so several chains replayed with the same seed share one stream.
    """
    if len(block_times) and block_times[-1] > horizon:
        raise DomainError("block times must lie within the horizon")
    rng = np.random.default_rng(seed)
    stream = ArrivalStream.generate(rng, horizon, sigma, fee_dist)
    return replay_chain(stream, block_times, b, bid_policy=bid_policy, tau=tau, carryover=carryover).block_fees


# --------------------------------------------------------------------------
# Paired chain comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedFeeComparison:
    mean_a: float
    mean_b: float
    diff_mean: float
    diff_se: float
    n: int

    @property
    def z(self) -> float:
        return self.diff_mean / self.diff_se if self.diff_se > 0 else math.copysign(math.inf, self.diff_mean)

    def greater(self, confidence: float = 0.99) -> bool:
        """One-sided test that chain A collects more per block than chain B."""
        return self.z > stats.norm.ppf(confidence)

    def less(self, confidence: float = 0.99) -> bool:
        return self.z < -stats.norm.ppf(confidence)


def compare_chain_fees(
    interval_a: float,
    interval_b: float,
    sigma: float,
    fee_dist: FeeDistribution,
    b: int,
    *,
    n_blocks: int = 10,
    n_reps: int = 10_000,
    seed: int = 0,
    carryover: bool = True,
    bid_policy: BidAdjustPolicy | None = None,
    tau: float = 1.0,
) -> PairedFeeComparison:
    """Mean per-block fees of two chains mining ``n_blocks`` exponential-time
    blocks each from one shared arrival stream per replication.

    Bid adjustment, if any, observes chain B (the public chain).
    """
    diffs = np.empty(n_reps)
    ma = np.empty(n_reps)
    mb = np.empty(n_reps)
    for k in range(n_reps):
        rng = np.random.default_rng([seed, k])
        ta = np.cumsum(rng.exponential(interval_a, n_blocks))
        tb = np.cumsum(rng.exponential(interval_b, n_blocks))
        stream = ArrivalStream.generate(rng, max(ta[-1], tb[-1]), sigma, fee_dist)
        ra = replay_chain(stream, ta, b, carryover=carryover, bid_policy=bid_policy, tau=tau, observer_times=tb)
        rb = replay_chain(stream, tb, b, carryover=carryover, bid_policy=bid_policy, tau=tau)
        ma[k] = ra.extracted_fees / n_blocks
        mb[k] = rb.extracted_fees / n_blocks
        diffs[k] = ma[k] - mb[k]
    se = float(diffs.std(ddof=1) / math.sqrt(n_reps)) if n_reps > 1 else float("nan")
    return PairedFeeComparison(float(ma.mean()), float(mb.mean()), float(diffs.mean()), se, n_reps)


# --------------------------------------------------------------------------
# Bundled market
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeeMarket:
    """Transaction demand faced by a chain with target block time ``tau``."""

    sigma: float
    b: int
    dist: FeeDistribution = field(default_factory=Degenerate)
    tau: float = 1.0
    law: str = "poisson"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError("sigma must be >= 0")
        if int(self.b) != self.b or self.b < 1:
            raise DomainError("b must be an integer >= 1")
        if self.law not in COUNT_LAWS:
            raise DomainError(f"unknown arrival-count law {self.law!r}")

    @property
    def congested(self) -> bool:
        return self.tau * self.sigma > self.b

    def per_block(self, interval: float | None = None) -> float:
        return fees_per_block(self.tau if interval is None else interval, self.sigma, self.dist, self.b, tau=self.tau, law=self.law)

    def second_tier(self, L: float) -> float:
        return second_tier_expected(L, self.tau, self.sigma, self.dist, self.b, law=self.law)

    def with_law(self, law: str) -> "FeeMarket":
        return FeeMarket(self.sigma, self.b, self.dist, self.tau, law)
