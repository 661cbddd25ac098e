"""Cost of majority attacks on longest-chain blockchains under free entry."""

from .attack import (
    AttackAssessment,
    AttackPlan,
    Regime,
    break_even_power,
    critical_incumbent_power,
    difficulty_adjust,
    hitting_time,
    linear_net_cost,
    min_attack_power,
    net_cost,
    optimal_attack_power,
    outside_attack_cost,
    power_family,
)
from .core import Degenerate, Empirical, Exponential, Linear, LinearPremium, NetworkParams, Power, Uniform
from .equilibrium import Equilibrium, MinerSpec, best_response, solve_equilibrium
from .errors import (
    DegenerateRoot,
    DomainError,
    NoEquilibrium,
    NonConvergence,
    NoRoot,
    NotUnique,
    ScenarioError,
    SimulationBudgetExceeded,
)
from .fees import FeeMarket, compare_chain_fees, expected_fees_per_block, fees_per_block, simulate_mempool
from .forksim import Escrow, LeadByOne, PaperRetarget, RaceConfig, run_batch, run_race

__all__ = [
    "AttackAssessment",
    "AttackPlan",
    "Regime",
    "break_even_power",
    "critical_incumbent_power",
    "difficulty_adjust",
    "hitting_time",
    "linear_net_cost",
    "min_attack_power",
    "net_cost",
    "optimal_attack_power",
    "outside_attack_cost",
    "power_family",
    "Degenerate",
    "Empirical",
    "Exponential",
    "Linear",
    "LinearPremium",
    "NetworkParams",
    "Power",
    "Uniform",
    "Equilibrium",
    "MinerSpec",
    "best_response",
    "solve_equilibrium",
    "DegenerateRoot",
    "DomainError",
    "NoEquilibrium",
    "NonConvergence",
    "NoRoot",
    "NotUnique",
    "ScenarioError",
    "SimulationBudgetExceeded",
    "FeeMarket",
    "compare_chain_fees",
    "expected_fees_per_block",
    "fees_per_block",
    "simulate_mempool",
    "Escrow",
    "LeadByOne",
    "PaperRetarget",
    "RaceConfig",
    "run_batch",
    "run_race",
]

__version__ = "0.1.0"
