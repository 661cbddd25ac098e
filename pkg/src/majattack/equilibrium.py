"""No-attack benchmark: price-taking miners, free entry, D = tau * H."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from scipy import optimize

from .core import CostFunction, MinerId, base_cost, is_linear
from .errors import DomainError, NoEquilibrium
from .fees import FeeMarket


@dataclass(frozen=True)
class MinerSpec:
    id: MinerId
    cost: CostFunction


@dataclass(frozen=True)
class Equilibrium:
    H: float
    allocations: Mapping[MinerId, float]
    active: tuple[MinerId, ...]
    phi: float
    D: float
    R: float
    tau: float
    fee_market: FeeMarket | None = field(default=None, compare=False)

    @property
    def reward(self) -> float:
        """Expected block reward plus fees, ``R + Phi``."""
        return self.R + self.phi

    def h(self, miner: MinerId) -> float:
        return self.allocations[miner]


def flow_profit(cost: CostFunction, h: float, H: float, reward: float, tau: float) -> float:
    return h / (tau * H) * reward - cost(h)


def best_response(m: MinerSpec | CostFunction, H: float, reward: float, tau: float) -> float:
    """Profit-maximising hash power for a price-taking miner.

    ``reward`` is ``R + Phi``.  Returns 0 when no positive level earns a
    strictly positive profit; a linear schedule cheaper than the revenue per
    hash has no finite optimum and returns ``inf``.
    """
    if not H > 0 or not tau > 0:
        raise DomainError("H and tau must be > 0")
    cost = m.cost if isinstance(m, MinerSpec) else m
    price = reward / (tau * H)
    if is_linear(cost):
        # zero profit (up to rounding) allocates nothing
        return math.inf if price > cost.slope * (1.0 + 1e-12) else 0.0
    h = cost.inverse_marginal(price)
    return h if flow_profit(cost, h, H, reward, tau) > 0 else 0.0


def _supply(miners: Sequence[MinerSpec], H: float, reward: float, tau: float) -> dict[MinerId, float]:
    return {m.id: best_response(m, H, reward, tau) for m in miners}


def solve_equilibrium(
    miners: Sequence[MinerSpec],
    R: float,
    tau: float,
    fee_market: FeeMarket | None = None,
    *,
    phi: float | None = None,
    max_iter: int = 500,
) -> Equilibrium:
    """Aggregate hash power at which every miner best-responds and shares sum to H.

    Fees per block come from ``fee_market`` at the target interval unless
    ``phi`` is given.  Linear miners pin ``H = (R + Phi) / (c tau)`` at the
    cheapest slope; convex miners fill in first and equal-cost linear miners
    split the remainder equally.
    """
    if not miners:
        raise DomainError("need at least one miner")
    if len({m.id for m in miners}) != len(miners):
        raise DomainError("miner ids must be unique")
    if not tau > 0:
        raise DomainError("tau must be > 0")
    if phi is None:
        phi = fee_market.per_block(tau) if fee_market is not None else 0.0
    reward = R + phi
    if not reward > 0:
        raise NoEquilibrium("no block revenue (R + Phi <= 0): nobody mines")

    miners = [MinerSpec(m.id, base_cost(m.cost)) for m in miners]
    linear = [m for m in miners if is_linear(m.cost)]
    convex = [m for m in miners if not is_linear(m.cost)]

    def convex_supply(H: float) -> float:
        return sum(best_response(m, H, reward, tau) for m in convex)

    H_lin = math.inf
    if linear:
        c_min = min(m.cost.slope for m in linear)
        if c_min <= 0:
            raise NoEquilibrium("zero-cost linear miner: unbounded hash power")
        H_lin = reward / (c_min * tau)

    if linear and convex_supply(H_lin) <= H_lin:
        H = H_lin
        alloc = {m.id: best_response(m, H, reward, tau) for m in convex}
        marginal = [m for m in linear if math.isclose(m.cost.slope, c_min, rel_tol=1e-12)]
        gap = H - sum(alloc.values())
        for m in linear:
            alloc[m.id] = gap / len(marginal) if m in marginal else 0.0
    else:
        # convex-only fixed point: supply(H) is decreasing, so S(H) - H has one root
        def excess(logH: float) -> float:
            H = math.exp(logH)
            return math.log(max(convex_supply(H), 1e-300)) - logH

        lo, hi = -1.0, 1.0
        for _ in range(max_iter):
            if excess(lo) > 0:
                break
            lo -= 2.0
        else:
            raise NoEquilibrium("could not bracket aggregate hash power from below")
        for _ in range(max_iter):
            if excess(hi) < 0:
                break
            hi += 2.0
        else:
            raise NoEquilibrium("could not bracket aggregate hash power from above")
        try:
            logH = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-13, maxiter=max_iter)
        except RuntimeError as exc:
            raise NoEquilibrium(str(exc)) from exc
        H = math.exp(logH)
        alloc = {m.id: best_response(m, H, reward, tau) for m in convex}
        alloc.update({m.id: 0.0 for m in linear})
        H = sum(alloc.values())

    active = tuple(mid for mid, h in alloc.items() if h > 0)
    return Equilibrium(H=H, allocations=alloc, active=active, phi=phi, D=tau * H, R=R, tau=tau, fee_market=fee_market)
