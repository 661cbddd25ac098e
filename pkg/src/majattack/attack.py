"""Attack-cost accounting, incentive compatibility and attack-power thresholds.

Notation in code: ``reward`` is R + Phi on the benchmark chain and
``reward_tilde`` is R~ + Phi~ on the attack chain.  ``L`` is the expected
attack length in clock time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Union

from scipy import optimize

from .core import CostFunction, LinearPremium, Power, base_cost, is_linear
from .equilibrium import Equilibrium
from .errors import DegenerateRoot, DomainError, NonConvergence, NoRoot, NotUnique
from .fees import FeeMarket

EPOCH = 2600
RewardCurve = Union[float, Callable[[float], float]]


class Regime(enum.Enum):
    ZERO = "ZeroCost"
    POSITIVE = "PositiveCost"
    NEGATIVE = "NegativeCost"


# --------------------------------------------------------------------------
# Thresholds
# --------------------------------------------------------------------------


def min_attack_power(h_star: float, H: float, h_rent: float = 0.0) -> float:
    """Own hash power an attacker must deploy to out-mine the honest branch.

    Own power up to ``h_star`` is withdrawn from the honest chain; rented
    incumbent power both joins the attack and leaves the honest chain.
    """
    if not 0 <= h_star <= H:
        raise DomainError(f"incumbent power h* = {h_star} must lie in [0, H = {H}]")
    if not 0 <= h_rent <= H - h_star + 1e-12 * H:
        raise DomainError("rented power must lie in [0, H - h*]")
    return max(0.5 * H - h_rent, H - h_star - 2.0 * h_rent, 0.0)


def honest_power(H: float, h_star: float, h_A: float, h_rent: float = 0.0) -> float:
    return H - min(h_A, h_star) - h_rent


def hitting_time(attack_power: float, honest: float, D: float) -> float:
    """Expected time for the private branch to get one block ahead."""
    if not attack_power > honest:
        raise DomainError("attack not guaranteed: attack power must exceed honest power")
    return D / (attack_power - honest)


def optimal_attack_power(cost: CostFunction, D: float, reward_tilde: float) -> float:
    """Minimiser of ``c(h) - (h/D) * reward_tilde`` via its first-order condition."""
    if is_linear(cost):
        raise NotUnique("cost-minimising attack power is not unique under linear costs")
    if reward_tilde <= 0:
        return 0.0
    target = reward_tilde / D
    foc = lambda h: cost.marginal(h) - target
    hi = 1.0
    while foc(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise NoRoot("marginal cost never reaches revenue per hash")
    return optimize.brentq(foc, 0.0, hi, xtol=1e-300, rtol=1e-12, maxiter=500)


def _reward_at(reward_tilde: RewardCurve, h: float) -> float:
    return reward_tilde(h) if callable(reward_tilde) else reward_tilde


def break_even_power(
    cost: CostFunction,
    D: float,
    reward: float,
    reward_tilde: RewardCurve,
    h_star: float,
) -> float:
    """Attack power above ``h_star`` at which attack-chain flow profit falls
    back to the no-attack flow profit.

    ``reward_tilde`` may be a function of attack power (fees depend on the
    attack chain's block interval).
    """
    base = base_cost(cost)
    no_attack = h_star / D * reward - base(h_star)
    gap = lambda h: h / D * _reward_at(reward_tilde, h) - cost(h) - no_attack

    r0 = _reward_at(reward_tilde, max(h_star, 1e-300))
    if r0 == reward:
        raise DegenerateRoot("attack and benchmark rewards coincide: break-even at h*", h_star)
    if r0 < reward:
        raise NoRoot("attack-chain reward below benchmark: no break-even above h*")
    lo = h_star if h_star > 0 else 1e-12
    if gap(lo) <= 0:
        raise NoRoot("attack flow profit does not exceed no-attack profit just above h*")
    hi = max(2.0 * lo, 1e-9)
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e15 * max(h_star, 1.0):
            raise NoRoot("attack flow profit never falls back (linear or concave costs)")
    return optimize.brentq(gap, lo, hi, xtol=1e-15 * hi, rtol=1e-13, maxiter=500)


def power_family(p: float, D: float, reward: float) -> Callable[[float], Power]:
    """Convex schedules ``gamma * h**p`` indexed by the incumbent power they induce."""

    def cost_for(h_star: float) -> Power:
        return Power(reward / (D * p * h_star ** (p - 1)), p)

    return cost_for


def critical_incumbent_power(
    cost_family: Callable[[float], CostFunction],
    H: float,
    tau: float,
    reward: float,
    reward_tilde: RewardCurve,
    *,
    lower: float = 1e-9,
) -> float:
    """Incumbent power ``h`` solving ``h + break_even(h) = H``.

    Miners at or above this size can attack at negative net cost.
    """
    D = tau * H
    g = lambda h: h + break_even_power(cost_family(h), D, reward, reward_tilde, h) - H
    lo, hi = lower * H, 0.5 * H
    try:
        glo, ghi = g(lo), g(hi)
    except NoRoot as exc:
        raise NoRoot(f"break-even power undefined on (0, H/2]: {exc}") from exc
    if not (glo < 0 < ghi):
        raise NoRoot("no sign change of h + break_even(h) - H on (0, H/2]")
    h_hat = optimize.brentq(g, lo, hi, xtol=1e-12 * H, rtol=1e-14, maxiter=500)
    assert 0 < h_hat < 0.5 * H
    return h_hat


# --------------------------------------------------------------------------
# Plans and assessment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackPlan:
    """Attacker ``cost`` during the attack (for the linear case a
    :class:`LinearPremium` blending inside and outside power).

    ``h_A=None`` lets the attacker pick ``max(h~, h_min)``.  ``phi_tilde=None``
    sources attack-chain fees from the equilibrium's fee market at the attack
    chain's block interval.
    """

    cost: CostFunction
    h_star: float
    h_A: float | None = None
    h_rent: float = 0.0
    V_attack: float = 0.0
    R_tilde: float | None = None
    phi_tilde: float | None = None
    base: CostFunction | None = None

    @property
    def base_cost(self) -> CostFunction:
        return self.base if self.base is not None else base_cost(self.cost)

    def alpha(self, h_A: float) -> float:
        return min(self.h_star, h_A) / h_A if h_A > 0 else 0.0


@dataclass(frozen=True)
class AttackAssessment:
    h_min: float
    h_tilde: float | None
    h_used: float
    h_rent: float
    phi_tilde: float
    reward_tilde: float
    L: float
    C_attack: float
    opportunity_cost: float
    net_cost: float
    V_attack: float
    regime: Regime

    @property
    def ic_holds(self) -> bool:
        return self.net_cost >= self.V_attack


@dataclass(frozen=True)
class _Resolved:
    h_min: float
    h_tilde: float | None
    h_used: float
    phi_tilde: float
    reward_tilde: float


def _attack_fees(plan: AttackPlan, eq: Equilibrium, h_total: float) -> float:
    if plan.phi_tilde is not None:
        return plan.phi_tilde
    if eq.fee_market is None:
        raise DomainError("no phi_tilde given and the equilibrium carries no fee market")
    return eq.fee_market.per_block(eq.tau * eq.H / h_total)


def resolve_attack_power(
    plan: AttackPlan,
    eq: Equilibrium,
    *,
    damping: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> _Resolved:
    """Deployed power and attack-chain fees.

    When the attacker chooses its power, fees depend on the attack chain's
    interval and the optimal power depends on fees; the loop is closed by a
    damped fixed-point iteration.
    """
    R_tilde = eq.R if plan.R_tilde is None else plan.R_tilde
    h_min = min_attack_power(plan.h_star, eq.H, plan.h_rent)
    D = eq.D

    def h_tilde_for(phi: float) -> float | None:
        try:
            return optimal_attack_power(plan.cost, D, R_tilde + phi)
        except NotUnique:
            return None

    if plan.h_A is not None:
        h = plan.h_A
        phi = _attack_fees(plan, eq, h + plan.h_rent)
        return _Resolved(h_min, h_tilde_for(phi), h, phi, R_tilde + phi)

    if is_linear(plan.cost):
        phi = _attack_fees(plan, eq, h_min + plan.h_rent)
        return _Resolved(h_min, None, h_min, phi, R_tilde + phi)

    if plan.phi_tilde is not None:
        ht = h_tilde_for(plan.phi_tilde)
        return _Resolved(h_min, ht, max(ht, h_min), plan.phi_tilde, R_tilde + plan.phi_tilde)

    h = max(h_min, plan.h_star, 1e-12 * eq.H)
    for _ in range(max_iter):
        phi = _attack_fees(plan, eq, h + plan.h_rent)
        target = max(h_tilde_for(phi), h_min)
        h_new = (1.0 - damping) * h + damping * target
        if abs(h_new - h) <= tol * max(h, 1e-300):
            h = h_new
            break
        h = h_new
    else:
        raise NonConvergence("attack power / attack fee fixed point did not converge")
    phi = _attack_fees(plan, eq, h + plan.h_rent)
    return _Resolved(h_min, h_tilde_for(phi), h, phi, R_tilde + phi)


def _per_time_cost(plan: AttackPlan, eq: Equilibrium, r: _Resolved) -> float:
    per_time = plan.cost(r.h_used) - r.h_used / eq.D * r.reward_tilde
    if plan.h_rent > 0:
        # rented incumbents earn the attack-chain reward for the attacker and are
        # compensated at exactly their forgone benchmark profit
        per_time += plan.h_rent / eq.D * (eq.reward - r.reward_tilde)
    return per_time


def attack_cost(plan: AttackPlan, eq: Equilibrium, L: float) -> float:
    """Expected cost of mounting the attack, net of attack-chain rewards."""
    return _per_time_cost(plan, eq, resolve_attack_power(plan, eq)) * L


def opportunity_cost(plan: AttackPlan, eq: Equilibrium, L: float) -> float:
    return (plan.h_star / eq.D * eq.reward - plan.base_cost(plan.h_star)) * L


def net_cost(plan: AttackPlan, eq: Equilibrium, L: float | None = None, *, rel_tol: float = 1e-9) -> AttackAssessment:
    """Forgone honest profit plus mounting cost; the attack is deterred iff
    this is at least ``V_attack``.

    ``L`` defaults to the expected time for the private branch to pull ahead.
    """
    r = resolve_attack_power(plan, eq)
    if isinstance(plan.cost, LinearPremium):
        inside = plan.cost.alpha * r.h_used
        if inside > plan.h_star * (1 + 1e-9) + 1e-12 * eq.H:
            raise DomainError(f"inside power alpha*h_A = {inside} exceeds incumbent power h* = {plan.h_star}")
    if L is None:
        L = hitting_time(r.h_used + plan.h_rent, honest_power(eq.H, plan.h_star, r.h_used, plan.h_rent), eq.D)
    C = _per_time_cost(plan, eq, r) * L
    opp = opportunity_cost(plan, eq, L)
    net = opp + C
    return AttackAssessment(
        h_min=r.h_min,
        h_tilde=r.h_tilde,
        h_used=r.h_used,
        h_rent=plan.h_rent,
        phi_tilde=r.phi_tilde,
        reward_tilde=r.reward_tilde,
        L=L,
        C_attack=C,
        opportunity_cost=opp,
        net_cost=net,
        V_attack=plan.V_attack,
        regime=classify(net, eq.reward, L / eq.tau, rel_tol),
    )


def classify(net: float, reward: float, blocks: float = 1.0, rel_tol: float = 1e-9) -> Regime:
    tol = rel_tol * reward * max(blocks, 1.0)
    if abs(net) <= tol:
        return Regime.ZERO
    return Regime.POSITIVE if net > 0 else Regime.NEGATIVE


def linear_net_cost(
    h_A: float,
    tau: float,
    H: float,
    reward: float,
    reward_tilde: float,
    kappa: float,
    alpha: float,
    L: float,
) -> float:
    """Closed-form net cost under symmetric linear costs and free entry."""
    return h_A / (tau * H) * (reward - reward_tilde + reward * (kappa - 1.0) * (1.0 - alpha)) * L


def rental_compensation(h_rent: float, D: float, reward: float, c_rent: CostFunction) -> float:
    """Smallest per-time payment that leaves the lessor as well off as mining honestly."""
    return h_rent / D * reward - c_rent(h_rent)


# --------------------------------------------------------------------------
# Difficulty retargeting
# --------------------------------------------------------------------------


def difficulty_adjust(D: float, d: float, h_A: float, H: float, epoch: int = EPOCH) -> tuple[float, float]:
    """Attack-branch difficulty and expected block time after the retarget
    that falls ``d`` blocks into the attack."""
    if not h_A > 0:
        raise DomainError("attack power must be > 0")
    if not 0 <= d <= epoch:
        raise DomainError(f"d must lie in [0, {epoch}]")
    ratio = H / h_A
    scaled = (epoch - d) + d * ratio
    D_new = D * epoch / scaled
    Y_new = (D / H) * ((ratio * epoch) / scaled)
    return D_new, Y_new


def attack_cost_with_retarget(
    plan: AttackPlan,
    eq: Equilibrium,
    d: float,
    L_pre: float,
    L_post: float,
    phi_tilde: float,
    phi_tilde_post: float,
    epoch: int = EPOCH,
) -> float:
    if plan.h_A is None:
        raise DomainError("retarget cost needs an explicit deployed power h_A")
    h = plan.h_A
    R_tilde = eq.R if plan.R_tilde is None else plan.R_tilde
    D_new, _ = difficulty_adjust(eq.D, d, h, eq.H, epoch)
    pre = plan.cost(h) - h / eq.D * (R_tilde + phi_tilde)
    post = plan.cost(h) - h / D_new * (R_tilde + phi_tilde_post)
    return L_pre * pre + L_post * post


# --------------------------------------------------------------------------
# Outside attack with lead-by-one stopping
# --------------------------------------------------------------------------


def outside_attack_cost(m: float, phi: float, phi_second_tier: float, L: float, tau: float) -> float:
    """Net cost of a fully outside attack that stops one block ahead.

    The attacker takes every block the honest chain would have produced plus
    one block of leftover transactions, so only that extra block's fee
    shortfall remains.
    """
    if not m > 1:
        raise DomainError("outside attack needs m = h_A/H > 1")
    if not L > 0:
        raise DomainError("attack length must be > 0")
    return phi - phi_second_tier


def outside_attack_cost_from_market(m: float, market: FeeMarket, L: float) -> float:
    return outside_attack_cost(m, market.per_block(), market.second_tier(L), L, market.tau)
