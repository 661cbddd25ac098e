"""Longest-chain Proof of Stake: free-entry staking and the majority-validator attack."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import Degenerate, FeeDistribution
from .errors import DomainError, NoEquilibrium
from .fees import ArrivalStream, FeeMarket, PairedFeeComparison, replay_chain


@dataclass(frozen=True)
class PoSParams:
    tau_s: float
    R_s: float
    r: float
    e_s: float
    b: int = 1
    sigma: float = 0.0
    fee_dist: FeeDistribution = Degenerate(0.0)

    def __post_init__(self):
        if not self.tau_s > 0:
            raise DomainError("slot time must be > 0")
        if not self.r >= 0:
            raise DomainError("interest rate must be >= 0")
        if not self.e_s > 0:
            raise DomainError("exchange rate must be > 0")

    @property
    def fee_market(self) -> FeeMarket:
        return FeeMarket(self.sigma, self.b, self.fee_dist, self.tau_s)

    @property
    def phi_s(self) -> float:
        """Fees per block when every slot is filled."""
        return self.fee_market.per_block(self.tau_s)


@dataclass(frozen=True)
class StakeSet:
    stakes: Mapping[int, float]

    def __post_init__(self):
        if any(s < 0 for s in self.stakes.values()):
            raise DomainError("stakes must be >= 0")
        if not self.S > 0:
            raise DomainError("total stake must be > 0")

    @property
    def S(self) -> float:
        return math.fsum(self.stakes.values())

    def share(self, v: int) -> float:
        return self.stakes[v] / self.S


def pos_equilibrium(params: PoSParams, shares: Mapping[int, float], *, phi_s: float | None = None) -> StakeSet:
    """Free-entry total stake ``S = (R_s + Phi_s) / (tau_s r e_s)``.

    Individual stakes are indeterminate under linear staking costs, so
    ``shares`` (normalised) decides the split.
    """
    if not params.r * params.e_s * params.tau_s > 0:
        raise DomainError("need r * e_s * tau_s > 0")
    phi = params.phi_s if phi_s is None else phi_s
    revenue = params.R_s + phi
    if not revenue > 0:
        raise NoEquilibrium("no block revenue: nobody stakes")
    total = revenue / (params.tau_s * params.r * params.e_s)
    weight = math.fsum(shares.values())
    if not weight > 0:
        raise DomainError("shares must have positive total")
    return StakeSet({v: total * w / weight for v, w in shares.items()})


def staking_profit(params: PoSParams, stake: float, S: float, phi_s: float) -> float:
    """Expected profit per unit of time of a validator with ``stake``."""
    return stake / (S * params.tau_s) * (params.R_s + phi_s) - params.r * stake * params.e_s


def expected_attack_slots(p: float) -> float:
    """Mean number of slots until a validator proposing with probability ``p``
    per slot is one block ahead of everyone else."""
    if not p > 0.5:
        return math.inf
    return 1.0 / (2.0 * p - 1.0)


def draw_slots(rng: np.random.Generator, p: float, n: int) -> np.ndarray:
    """True where the attacker (stake share ``p``) is selected to propose."""
    return rng.random(n) < p


@dataclass(frozen=True)
class PoSTrace:
    slots: int
    attack_blocks: int
    honest_blocks: int
    finished: bool
    guaranteed: bool
    attack_fees: float = 0.0
    honest_fees: float = 0.0

    @property
    def duration(self) -> float:
        return float(self.slots)


def simulate_pos_attack(
    stakes: StakeSet,
    attacker: int,
    params: PoSParams,
    horizon_slots: int,
    seed: int = 0,
    *,
    carryover: bool = True,
) -> PoSTrace:
    """Slot-by-slot fork race: the attacker's slots extend its private branch,
    every other slot extends the honest branch (the attacker's own slots are
    no-shows there).  Stops once the private branch is longer."""
    p = stakes.share(attacker)
    rng = np.random.default_rng(seed)
    draws = draw_slots(rng, p, horizon_slots)
    lead = np.cumsum(np.where(draws, 1, -1))
    ahead = np.flatnonzero(lead > 0)
    finished = len(ahead) > 0
    slots = int(ahead[0]) + 1 if finished else horizon_slots
    mine = draws[:slots]
    n_a = int(mine.sum())
    trace = PoSTrace(slots, n_a, slots - n_a, finished, p > 0.5)
    if params.sigma > 0 and params.tau_s * params.sigma > params.b:
        ends = (np.arange(1, slots + 1)) * params.tau_s
        stream = ArrivalStream.generate(rng, slots * params.tau_s, params.sigma, params.fee_dist)
        fa = replay_chain(stream, ends[mine], params.b, carryover=carryover).extracted_fees
        fh = replay_chain(stream, ends[~mine], params.b, carryover=carryover).extracted_fees
        trace = PoSTrace(slots, n_a, slots - n_a, finished, p > 0.5, fa, fh)
    return trace


def compare_pos_fees(
    p: float,
    params: PoSParams,
    *,
    n_blocks: int = 10,
    n_reps: int = 10_000,
    seed: int = 0,
    carryover: bool = True,
) -> PairedFeeComparison:
    """Per-block fees on the attacker's branch (a block only in its own slots)
    against the no-attack chain (a block every slot), one shared stream per
    replication, ``n_blocks`` blocks each."""
    diffs = np.empty(n_reps)
    ma = np.empty(n_reps)
    mb = np.empty(n_reps)
    tau = params.tau_s
    bench = np.arange(1, n_blocks + 1) * tau
    for k in range(n_reps):
        rng = np.random.default_rng([seed, k])
        slots = np.cumsum(rng.geometric(p, n_blocks))
        attack = slots * tau
        stream = ArrivalStream.generate(rng, attack[-1], params.sigma, params.fee_dist)
        ma[k] = replay_chain(stream, attack, params.b, carryover=carryover).extracted_fees / n_blocks
        mb[k] = replay_chain(stream, bench, params.b, carryover=carryover).extracted_fees / n_blocks
        diffs[k] = ma[k] - mb[k]
    se = float(diffs.std(ddof=1) / math.sqrt(n_reps))
    return PairedFeeComparison(float(ma.mean()), float(mb.mean()), float(diffs.mean()), se, n_reps)


@dataclass(frozen=True)
class PoSAttackCost:
    C_attack: float
    V_attack: float
    staking_cost: float | None = None

    @property
    def ic_holds(self) -> bool:
        return self.C_attack >= self.V_attack


def pos_attack_cost(
    s_A: float,
    S: float,
    phi_s: float,
    phi_tilde_s: float,
    L: float,
    tau_s: float,
    *,
    V_attack: float = 0.0,
    params: PoSParams | None = None,
) -> PoSAttackCost:
    """Attack cost under free entry with unchanged block rewards.

    Staking costs accrue identically with or without the attack and cancel;
    they are reported (when ``params`` is given) for transparency only.
    """
    C = s_A / (tau_s * S) * (phi_s - phi_tilde_s) * L
    staking = None if params is None else params.r * s_A * params.e_s * L
    return PoSAttackCost(C, V_attack, staking)
