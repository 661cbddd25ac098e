"""Discrete-event Monte Carlo of a private-branch majority attack.

Two branches grow from a common fork point at t = 0: the attacker's private
branch (rate h_A / D_attack) and the public honest branch (rate
honest_power / D_honest).  Both draw transactions from one arrival stream;
the attacker may include transactions the honest branch already confirmed,
since those blocks will be orphaned.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy import optimize

from .core import CostFunction, Degenerate, FeeDistribution, Linear
from .errors import DomainError, SimulationBudgetExceeded
from .fees import BidAdjustPolicy, Mempool, NoAdjust, Transaction, observed_interval


@dataclass(frozen=True)
class LeadByOne:
    pass


@dataclass(frozen=True)
class Escrow:
    """Recipients wait for ``w`` public confirmations before the attacker may reveal."""

    w: int

    def __post_init__(self):
        if int(self.w) != self.w or self.w < 1:
            raise DomainError("escrow depth w must be an integer >= 1")


StopRule = Union[LeadByOne, Escrow]


@dataclass(frozen=True)
class PaperRetarget:
    """Retarget each branch ``d`` blocks after the fork, then every ``epoch`` blocks.

    The pre-fork part of the window is taken to have run exactly on target.
    """

    d: int
    epoch: int = 2600

    def __post_init__(self):
        if not 0 < self.d <= self.epoch:
            raise DomainError("retarget offset d must lie in (0, epoch]")


@dataclass(frozen=True)
class EntryImmediate:
    """Honest branch is topped back up to the pre-attack power at the fork."""


@dataclass(frozen=True)
class EntryDelayed:
    """Honest power grows at ``rate`` per unit time until it reaches ``cap``.

    ``cap=None`` means the pre-attack aggregate H (entrants as efficient as the
    marginal miner); a smaller cap models less efficient entrants, see
    :func:`entry_cap`.
    """

    rate: float
    cap: float | None = None

    def __post_init__(self):
        if not self.rate >= 0:
            raise DomainError("entry rate must be >= 0")


Entry = Union[None, EntryImmediate, EntryDelayed]


@dataclass(frozen=True)
class RaceConfig:
    h_A: float
    honest_power: float
    D: float
    tau: float = 1.0
    R: float = 0.0
    attacker_cost: CostFunction = Linear(0.0)
    sigma: float = 0.0
    b: int = 1
    fee_dist: FeeDistribution = Degenerate(0.0)
    bid_policy: BidAdjustPolicy = NoAdjust()
    carryover: bool = True
    stop: StopRule = LeadByOne()
    retarget: PaperRetarget | None = None
    entry: Entry = None
    H: float | None = None
    seed: int = 0
    event_budget: int = 10_000_000
    cost_rate: float | None = None  # overrides attacker_cost(h_A), e.g. to include rental payments

    def __post_init__(self):
        if not self.h_A > 0:
            raise DomainError("attacker power must be > 0")
        if not self.honest_power >= 0:
            raise DomainError("honest power must be >= 0")
        if not self.D > 0 or not self.tau > 0:
            raise DomainError("D and tau must be > 0")

    @property
    def pre_attack_power(self) -> float:
        return self.D / self.tau if self.H is None else self.H

    @property
    def peak_honest_power(self) -> float:
        if isinstance(self.entry, EntryImmediate):
            return max(self.honest_power, self.pre_attack_power)
        if isinstance(self.entry, EntryDelayed):
            cap = self.pre_attack_power if self.entry.cap is None else self.entry.cap
            return max(self.honest_power, cap)
        return self.honest_power

    @property
    def guaranteed(self) -> bool:
        return self.h_A > self.peak_honest_power


@dataclass(frozen=True)
class RetargetEvent:
    time: float
    chain: str
    difficulty: float


@dataclass(frozen=True)
class SimTrace:
    duration: float
    attack_blocks: int
    honest_blocks: int
    attack_fees: float
    orphaned_honest_fees: float
    mining_cost: float
    attack_cost: float
    active_time: float
    attack_weight: float
    honest_weight: float
    guaranteed: bool
    arrived_fees: float = 0.0
    attack_pool_left: float = 0.0
    attack_fees_discarded: float = 0.0
    retarget_events: tuple[RetargetEvent, ...] = ()


def split_seed(seed: int, k: int) -> int:
    """Independent child seed for replication ``k``."""
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1, np.uint64)[0])


class _Exp:
    """Buffered unit-exponential draws."""

    def __init__(self, rng: np.random.Generator, size: int = 256):
        self.rng = rng
        self.size = size
        self.buf: list[float] = []

    def __call__(self) -> float:
        if not self.buf:
            self.buf = self.rng.standard_exponential(self.size).tolist()
            self.buf.reverse()
        return self.buf.pop()


class _HonestPower:
    """Piecewise-linear honest power profile P(t) = min(cap, P0 + rate t)."""

    def __init__(self, cfg: RaceConfig):
        p0 = cfg.honest_power
        rate, cap = 0.0, p0
        if isinstance(cfg.entry, EntryImmediate):
            p0 = cap = max(p0, cfg.pre_attack_power)
        elif isinstance(cfg.entry, EntryDelayed):
            cap = cfg.pre_attack_power if cfg.entry.cap is None else cfg.entry.cap
            if cap > p0 and cfg.entry.rate > 0:
                rate = cfg.entry.rate
            else:
                cap = p0
        self.p0, self.rate, self.cap = p0, rate, cap
        self.t_cap = (cap - p0) / rate if rate > 0 else 0.0

    def at(self, t: float) -> float:
        return min(self.cap, self.p0 + self.rate * t) if self.rate > 0 else self.p0

    def next_event(self, t: float, work: float) -> float:
        """Earliest t' with integral of P over [t, t'] equal to ``work``."""
        p = self.at(t)
        if self.rate > 0 and t < self.t_cap:
            span = self.t_cap - t
            ramp = p * span + 0.5 * self.rate * span * span
            if work <= ramp:
                return t + (math.sqrt(p * p + 2.0 * self.rate * work) - p) / self.rate
            return self.t_cap + (work - ramp) / self.cap
        return t + work / p if p > 0 else math.inf


def _retarget(times: list[float], n: int, rule: PaperRetarget, tau: float, current: float) -> float | None:
    if n < rule.d or (n - rule.d) % rule.epoch:
        return None
    k0 = n - rule.epoch
    start = k0 * tau if k0 <= 0 else times[k0 - 1]
    elapsed = times[n - 1] - start
    return current * rule.epoch * tau / elapsed


def run_race(cfg: RaceConfig) -> SimTrace:
    rng = np.random.default_rng(cfg.seed)
    draw = _Exp(rng)
    honest = _HonestPower(cfg)
    w = cfg.stop.w if isinstance(cfg.stop, Escrow) else 0
    fees_on = cfg.sigma > 0 and cfg.tau * cfg.sigma > cfg.b
    adjusting = not isinstance(cfg.bid_policy, NoAdjust)
    attack_rate_cost = cfg.attacker_cost(cfg.h_A) if cfg.cost_rate is None else cfg.cost_rate

    pool_a, pool_h = Mempool(), Mempool()
    t = 0.0
    n_a = n_h = 0
    w_a = w_h = 0.0
    d_a = d_h = cfg.D
    times_a: list[float] = []
    times_h: list[float] = []
    attack_fees = honest_fees = arrived = discarded = 0.0
    active = 0.0
    events: list[RetargetEvent] = []
    seq = 0

    for n_events in range(cfg.event_budget + 1):
        if n_h >= w and w_a > w_h:
            break
        if n_events == cfg.event_budget:
            raise SimulationBudgetExceeded(f"race unresolved after {cfg.event_budget} block events")
        mining = not (w_a > w_h and n_a >= w + 1)
        t_a = t + draw() * d_a / cfg.h_A if mining else math.inf
        t_h = honest.next_event(t, draw() * d_h)
        t_next = min(t_a, t_h)
        if math.isinf(t_next):
            raise SimulationBudgetExceeded("race stalled: no branch can produce a block")

        if fees_on:
            k = int(rng.poisson(cfg.sigma * (t_next - t)))
            if k:
                at = np.sort(rng.uniform(t, t_next, size=k)).tolist()
                af = cfg.fee_dist.sample(rng, k).tolist()
                for ti, fi in zip(at, af):
                    if adjusting:
                        fi = cfg.bid_policy.adjust(fi, observed_interval(ti, n_h), cfg.tau)
                    tx = Transaction(ti, fi, seq)
                    seq += 1
                    pool_a.push(tx)
                    pool_h.push(tx)
                    arrived += fi
        if mining:
            active += t_next - t
        t = t_next

        if t_a <= t_h:
            n_a += 1
            w_a += d_a
            times_a.append(t)
            if fees_on:
                attack_fees += sum(tx.fee for tx in pool_a.pop_top(cfg.b))
                if not cfg.carryover:
                    discarded += pool_a.total_fees
                    pool_a.clear()
            if cfg.retarget is not None:
                new = _retarget(times_a, n_a, cfg.retarget, cfg.tau, d_a)
                if new is not None:
                    d_a = new
                    events.append(RetargetEvent(t, "attack", new))
        else:
            n_h += 1
            w_h += d_h
            times_h.append(t)
            if fees_on:
                honest_fees += sum(tx.fee for tx in pool_h.pop_top(cfg.b))
                if not cfg.carryover:
                    pool_h.clear()
            if cfg.retarget is not None:
                new = _retarget(times_h, n_h, cfg.retarget, cfg.tau, d_h)
                if new is not None:
                    d_h = new
                    events.append(RetargetEvent(t, "honest", new))

    mining_cost = attack_rate_cost * active
    return SimTrace(
        duration=t,
        attack_blocks=n_a,
        honest_blocks=n_h,
        attack_fees=attack_fees,
        orphaned_honest_fees=honest_fees,
        mining_cost=mining_cost,
        attack_cost=mining_cost - n_a * cfg.R - attack_fees,
        active_time=active,
        attack_weight=w_a,
        honest_weight=w_h,
        guaranteed=cfg.guaranteed,
        arrived_fees=arrived,
        attack_pool_left=pool_a.total_fees,
        attack_fees_discarded=discarded,
        retarget_events=tuple(events),
    )


def heaviest_chain(incumbent: Sequence[tuple[int, float]], challenger: Sequence[tuple[int, float]]) -> int:
    """Index of the winning branch (0 = incumbent public chain, 1 = challenger).

    Each branch is a list of post-fork ``(blocks, difficulty)`` segments; ties
    go to the incumbent.
    """
    weight = lambda chain: sum(n * d for n, d in chain)
    return 1 if weight(challenger) > weight(incumbent) else 0


# --------------------------------------------------------------------------
# Batches
# --------------------------------------------------------------------------

_FIELDS = ("duration", "attack_blocks", "honest_blocks", "attack_fees", "orphaned_honest_fees", "mining_cost", "attack_cost", "active_time")


@dataclass(frozen=True)
class BatchSummary:
    n: int
    seed: int
    samples: dict = field(repr=False)

    def mean(self, name: str) -> float:
        return float(np.mean(self.samples[name]))

    def stderr(self, name: str) -> float:
        x = self.samples[name]
        return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")

    def row(self) -> dict[str, float]:
        out = {}
        for name in _FIELDS:
            out[f"{name}_mean"] = self.mean(name)
            out[f"{name}_se"] = self.stderr(name)
        return out


def _run_indexed(args):
    cfg, k = args
    try:
        return k, run_race(replace(cfg, seed=split_seed(cfg.seed, k)))
    except SimulationBudgetExceeded as exc:
        raise SimulationBudgetExceeded(str(exc), k) from None


def run_batch(cfg: RaceConfig, n_replications: int, *, workers: int = 1) -> BatchSummary:
    """Replication ``k`` runs with seed ``split_seed(cfg.seed, k)``; results are
    collected in replication order regardless of completion order."""
    if n_replications < 1:
        raise DomainError("n_replications must be >= 1")
    jobs = [(cfg, k) for k in range(n_replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_indexed, jobs, chunksize=max(1, n_replications // (4 * workers))))
    else:
        results = [_run_indexed(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    samples = {name: np.array([getattr(tr, name) for _, tr in results], dtype=float) for name in _FIELDS}
    return BatchSummary(n_replications, cfg.seed, samples)


def entry_cap(c_entrant: float, D: float, R: float, fee_per_block, hi: float) -> float:
    """Honest power at which an entrant with linear cost ``c_entrant`` breaks even.

    ``fee_per_block(interval)`` gives fees per honest block; per-hash revenue
    is ``(R + fees(D / P)) / D``, which falls as honest power ``P`` rises.
    """
    margin = lambda P: (R + fee_per_block(D / P)) / D - c_entrant
    if margin(hi) >= 0:
        return hi
    lo = hi * 1e-9
    if margin(lo) <= 0:
        return 0.0
    return optimize.brentq(margin, lo, hi, xtol=1e-12 * hi)
