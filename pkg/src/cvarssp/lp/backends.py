"""Pluggable LP solvers: exact rational simplex and HiGHS through scipy."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .model import INFEASIBLE, OPTIMAL, LpModel, LpSolution, UnboundedLp
from .simplex import simplex_exact, simplex_exact_from_hint

BACKENDS = ("exact", "exact-pure", "float")


def solve_float(lp: LpModel) -> LpSolution:
    n = lp.n_vars
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for c in lp.constraints:
        if c.sense == "=":
            eq_rows.append(c.coeffs)
            eq_rhs.append(float(c.rhs))
        else:
            sgn = 1.0 if c.sense == "<=" else -1.0
            ub_rows.append({j: sgn * float(v) for j, v in c.coeffs.items()})
            ub_rhs.append(sgn * float(c.rhs))

    def sparse(rows):
        if not rows:
            return None
        ri, ci, data = [], [], []
        for i, r in enumerate(rows):
            for j, v in r.items():
                ri.append(i)
                ci.append(j)
                data.append(float(v))
        return coo_matrix((data, (ri, ci)), shape=(len(rows), n)).tocsr()

    cost = np.zeros(n)
    for j, v in lp.objective.items():
        cost[j] = float(v)
    res = linprog(
        cost,
        A_ub=sparse(ub_rows),
        b_ub=ub_rhs or None,
        A_eq=sparse(eq_rows),
        b_eq=eq_rhs or None,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status == 2:
        return LpSolution(INFEASIBLE)
    if res.status == 3:
        raise UnboundedLp("objective is unbounded below")
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    return LpSolution(OPTIMAL, float(res.fun), tuple(float(v) for v in res.x))


def solve_exact(lp: LpModel) -> LpSolution:
    """Exact optimum, warm-started from a HiGHS basis when one is available.

    The float solve only proposes a basis; feasibility and optimality are decided
    by exact pivoting, so the answer does not depend on HiGHS being right.
    """
    approx = solve_float(lp)
    if approx.optimal:
        sol = simplex_exact_from_hint(lp, approx.values)
        if sol is not None:
            return sol
    return simplex_exact(lp)


def solve_lp(lp: LpModel, backend: str = "exact") -> LpSolution:
    if backend == "exact":
        return solve_exact(lp)
    if backend == "exact-pure":
        return simplex_exact(lp)
    if backend == "float":
        return solve_float(lp)
    raise ValueError(f"unknown LP backend {backend!r}; choose from {', '.join(BACKENDS)}")
