"""CVaR-optimal planning for stochastic shortest path problems."""

from .chain import MarkovChain, TransientDistribution, cvar_chain, find_var, initial_distribution, step_distribution
from .lp.cvar import build_lp, solve_cvar_lp
from .model import (
    EXACT,
    AssumptionError,
    Mdp,
    ModelError,
    NumericMode,
    ThresholdQuery,
    float_mode,
    make_mdp,
    parse_model,
    serialize_model,
    validate_assumptions,
)
from .pareto import ParetoPolygon, hull_union, minkowski_sum
from .policy import Policy, dump_policy, induced_chain, load_policy, policy_risk
from .risk import CostDistribution, RiskResult, cvar, risk, var
from .simulate import SimReport, simulate_policy
from .ssp import SspValues, solve_ssp
from .vi import solve_cvar_vi

__all__ = [
    "EXACT",
    "AssumptionError",
    "CostDistribution",
    "MarkovChain",
    "Mdp",
    "ModelError",
    "NumericMode",
    "ParetoPolygon",
    "Policy",
    "RiskResult",
    "SimReport",
    "SspValues",
    "ThresholdQuery",
    "TransientDistribution",
    "build_lp",
    "cvar",
    "cvar_chain",
    "dump_policy",
    "find_var",
    "float_mode",
    "hull_union",
    "induced_chain",
    "initial_distribution",
    "load_policy",
    "make_mdp",
    "minkowski_sum",
    "parse_model",
    "policy_risk",
    "risk",
    "serialize_model",
    "simulate_policy",
    "solve_cvar_lp",
    "solve_cvar_vi",
    "solve_ssp",
    "step_distribution",
    "validate_assumptions",
    "var",
]
