"""Shared domain types: cost schedules, fee distributions, network constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special, stats

from .errors import DomainError

MinerId = int


def _check_h(h: float) -> None:
    if not h >= 0:
        raise DomainError(f"hash power must be non-negative, got {h!r}")


# --------------------------------------------------------------------------
# Cost schedules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    """Constant cost ``c`` per unit of hash power per unit of time."""

    c: float

    def __post_init__(self):
        if not self.c >= 0:
            raise DomainError(f"linear cost must be >= 0, got {self.c}")

    @property
    def slope(self) -> float:
        return self.c

    def __call__(self, h: float) -> float:
        _check_h(h)
        return self.c * h

    def marginal(self, h: float) -> float:
        _check_h(h)
        return self.c


@dataclass(frozen=True)
class LinearPremium:
    """Blended schedule for an attacker drawing a share ``alpha`` of its power
    from its own incumbent rigs (cost ``c``) and the rest from outside
    capacity priced at ``kappa * c``."""

    c: float
    kappa: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.c >= 0:
            raise DomainError(f"linear cost must be >= 0, got {self.c}")
        if not self.kappa >= 1:
            raise DomainError(f"outside premium kappa must be >= 1, got {self.kappa}")
        if not 0 <= self.alpha <= 1:
            raise DomainError(f"inside share alpha must lie in [0, 1], got {self.alpha}")

    @property
    def slope(self) -> float:
        return self.c * (self.alpha + self.kappa * (1.0 - self.alpha))

    @property
    def base(self) -> Linear:
        """The incumbent (pre-attack) schedule."""
        return Linear(self.c)

    def __call__(self, h: float) -> float:
        _check_h(h)
        return self.slope * h

    def marginal(self, h: float) -> float:
        _check_h(h)
        return self.slope


@dataclass(frozen=True)
class Power:
    """Strictly convex schedule ``gamma * h**p`` with ``p > 1``."""

    gamma: float
    p: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"power-cost scale must be > 0, got {self.gamma}")
        if not self.p > 1:
            raise DomainError(f"power-cost exponent must be > 1, got {self.p}")

    def __call__(self, h: float) -> float:
        _check_h(h)
        return self.gamma * h**self.p

    def marginal(self, h: float) -> float:
        _check_h(h)
        return self.gamma * self.p * h ** (self.p - 1)

    def inverse_marginal(self, slope: float) -> float:
        """Power level at which the marginal cost equals ``slope``."""
        if slope <= 0:
            return 0.0
        return (slope / (self.gamma * self.p)) ** (1.0 / (self.p - 1))


CostFunction = Union[Linear, LinearPremium, Power]


def cost_eval(f: CostFunction, h: float) -> float:
    """Cost per unit of time of running ``h`` hash power under schedule ``f``."""
    return f(h)


def cost_marginal(f: CostFunction, h: float) -> float:
    return f.marginal(h)


def is_linear(f: CostFunction) -> bool:
    return isinstance(f, (Linear, LinearPremium))


def base_cost(f: CostFunction) -> CostFunction:
    """Schedule the miner faces outside an attack."""
    return f.base if isinstance(f, LinearPremium) else f


# --------------------------------------------------------------------------
# Fee distributions
# --------------------------------------------------------------------------
#
# ``top_sum(n, start, count)`` is the expected sum of the order statistics
# ranked ``start+1 .. start+count`` (descending) among ``n`` iid draws.  The
# per-variant closed forms back the deterministic fee curves used by the
# analytic layer; Monte Carlo estimators only ever call ``sample``.


def _rank_window(n: int, start: int, count: int) -> range:
    lo = min(start, n)
    hi = min(start + count, n)
    return range(lo + 1, hi + 1)


@dataclass(frozen=True)
class Degenerate:
    value: float = 0.0

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError("fees must be non-negative")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def variance(self) -> float:
        return 0.0

    @property
    def is_point_mass(self) -> bool:
        return True

    def quantile(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.value)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, self.value)

    def top_sum(self, n: int, start: int, count: int) -> float:
        return self.value * len(_rank_window(n, start, count))


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise DomainError(f"uniform fees need 0 <= lo < hi, got ({self.lo}, {self.hi})")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    @property
    def is_point_mass(self) -> bool:
        return False

    def quantile(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)

    def top_sum(self, n: int, start: int, count: int) -> float:
        ranks = _rank_window(n, start, count)
        if not ranks:
            return 0.0
        # descending rank j sits at expected quantile (n + 1 - j) / (n + 1)
        k = len(ranks)
        j_sum = (ranks.start + ranks.stop - 1) * k / 2.0
        return k * self.lo + (self.hi - self.lo) * (k * (n + 1) - j_sum) / (n + 1)


@dataclass(frozen=True)
class Exponential:
    mean: float = 1.0

    def __post_init__(self):
        if not self.mean > 0:
            raise DomainError("exponential fee mean must be > 0")

    @property
    def variance(self) -> float:
        return self.mean**2

    @property
    def is_point_mass(self) -> bool:
        return False

    def quantile(self, u):
        return -self.mean * np.log1p(-np.asarray(u, dtype=float))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(self.mean, size=n)

    def top_sum(self, n: int, start: int, count: int) -> float:
        ranks = _rank_window(n, start, count)
        if not ranks:
            return 0.0
        # E[j-th largest of n] = mean * (H_n - H_{j-1})
        j = np.arange(ranks.start, ranks.stop)
        return float(self.mean * np.sum(special.digamma(n + 1) - special.digamma(j)))


@dataclass(frozen=True)
class Empirical:
    """Resampling distribution putting equal mass on each listed fee."""

    values: tuple = field(default_factory=tuple)

    def __post_init__(self):
        vals = tuple(sorted(float(v) for v in self.values))
        if not vals:
            raise DomainError("empirical fee list must be non-empty")
        if vals[0] < 0:
            raise DomainError("fees must be non-negative")
        object.__setattr__(self, "values", vals)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def variance(self) -> float:
        return float(np.var(self.values))

    @property
    def is_point_mass(self) -> bool:
        return self.values[0] == self.values[-1]

    def quantile(self, u):
        arr = np.asarray(self.values)
        idx = np.ceil(np.asarray(u, dtype=float) * len(arr)).astype(int) - 1
        return arr[np.clip(idx, 0, len(arr) - 1)]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(np.asarray(self.values), size=n, replace=True)

    def top_sum(self, n: int, start: int, count: int) -> float:
        ranks = _rank_window(n, start, count)
        if not ranks:
            return 0.0
        xs, counts = np.unique(self.values, return_counts=True)
        cdf = np.cumsum(counts) / len(self.values)
        cdf_prev = np.concatenate(([0.0], cdf[:-1]))
        total = 0.0
        for j in ranks:
            k = n + 1 - j  # ascending rank
            # P(X_(k) <= x) = P(Binomial(n, F(x)) >= k)
            upper = stats.binom.sf(k - 1, n, cdf)
            lower = stats.binom.sf(k - 1, n, cdf_prev)
            total += float(np.dot(xs, upper - lower))
        return total


FeeDistribution = Union[Degenerate, Uniform, Exponential, Empirical]


def fee_dist_from_values(values: Sequence[float]) -> Empirical:
    return Empirical(tuple(values))


# --------------------------------------------------------------------------
# Network constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkParams:
    tau: float
    R: float
    b: int = 1
    sigma: float = 0.0
    fee_dist: FeeDistribution = Degenerate(0.0)
    D: float | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("target inter-block time tau must be > 0")
        if not self.R >= 0:
            raise DomainError("block reward R must be >= 0")
        if int(self.b) != self.b or self.b < 1:
            raise DomainError("block capacity b must be an integer >= 1")
        if not self.sigma >= 0:
            raise DomainError("arrival rate sigma must be >= 0")
        if self.D is not None and not self.D > 0:
            raise DomainError("difficulty D must be > 0")

    @property
    def congested(self) -> bool:
        return self.tau * self.sigma > self.b

    @classmethod
    def from_equilibrium(cls, eq, *, b: int, sigma: float, fee_dist: FeeDistribution):
        D = eq.tau * eq.H
        if not math.isclose(D, eq.D, rel_tol=1e-9):
            raise DomainError(f"difficulty {eq.D} inconsistent with tau*H = {D}")
        return cls(tau=eq.tau, R=eq.R, b=b, sigma=sigma, fee_dist=fee_dist, D=eq.D)
