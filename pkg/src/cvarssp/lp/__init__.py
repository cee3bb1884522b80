from .backends import BACKENDS, solve_lp
from .model import INFEASIBLE, OPTIMAL, LpModel, LpSolution, UnboundedLp, to_lp_format

__all__ = ["BACKENDS", "INFEASIBLE", "OPTIMAL", "LpModel", "LpSolution", "UnboundedLp", "solve_lp", "to_lp_format"]
