"""Exact revised simplex over gmpy2 rationals.

Basis systems are re-solved from scratch with the sparse exact solver every
iteration, so no rounding or factor drift can accumulate. Pricing is Dantzig's
rule until a run of degenerate pivots, after which Bland's rule takes over for
the rest of the solve and guarantees termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2

from ..linalg import SingularSystem, solve_sparse_mpq, to_fraction
from .model import INFEASIBLE, OPTIMAL, LpModel, LpSolution, UnboundedLp

mpq = gmpy2.mpq
DEGENERATE_RUN = 25


@dataclass
class StandardForm:
    """``A x = b, x >= 0`` with ``b >= 0``; columns past ``n_real`` are artificial."""

    cols: list[dict[int, object]]
    b: list
    cost: list
    n_struct: int
    n_real: int
    natural: dict[int, int]  # row -> slack column usable as an initial basic variable


def standardize(lp: LpModel) -> StandardForm:
    cols: list[dict[int, object]] = [{} for _ in range(lp.n_vars)]
    b = []
    natural = {}
    for r, c in enumerate(lp.constraints):
        flip = c.rhs < 0
        sgn = -1 if flip else 1
        for j, v in c.coeffs.items():
            cols[j][r] = mpq(sgn * v)
        b.append(mpq(sgn * c.rhs))
        sense = c.sense
        if flip and sense != "=":
            sense = "<=" if sense == ">=" else ">="
        if sense != "=":
            cols.append({r: mpq(1 if sense == "<=" else -1)})
            if sense == "<=":
                natural[r] = len(cols) - 1
    cost = [mpq(lp.objective.get(j, 0)) for j in range(lp.n_vars)] + [mpq(0)] * (len(cols) - lp.n_vars)
    return StandardForm(cols, b, cost, lp.n_vars, len(cols), natural)


def _solve_basis(sf: StandardForm, basis: list[int], rhs_col: dict[int, object]) -> list:
    m = len(sf.b)
    rows: list[dict[int, object]] = [{} for _ in range(m)]
    for k, j in enumerate(basis):
        for r, v in sf.cols[j].items():
            rows[r][k] = v
    rhs = [rhs_col.get(r, 0) for r in range(m)]
    return solve_sparse_mpq(rows, rhs)


def _duals(sf: StandardForm, basis: list[int], cost: list) -> list:
    # B^T y = c_B: row k of B^T is basic column k
    return solve_sparse_mpq([sf.cols[j] for j in basis], [cost[j] for j in basis])


def _iterate(sf: StandardForm, basis: list[int], xb: list, cost: list, allowed: int, max_iter: int) -> int:
    """Run simplex pivots in place; columns ``>= allowed`` never enter. Returns the
    pivot count. Raises :class:`UnboundedLp` on an unbounded ray."""
    degenerate = 0
    bland = False
    for it in range(max_iter):
        y = _duals(sf, basis, cost)
        in_basis = set(basis)
        entering, best = None, 0
        for j in range(allowed):
            if j in in_basis:
                continue
            d = cost[j] - sum((y[r] * v for r, v in sf.cols[j].items()), mpq(0))
            if d < 0:
                if bland:
                    entering = j
                    break
                if d < best:
                    entering, best = j, d
        if entering is None:
            return it
        w = _solve_basis(sf, basis, sf.cols[entering])
        leave, ratio = None, None
        for k, wk in enumerate(w):
            if wk > 0:
                q = xb[k] / wk
                if ratio is None or q < ratio or (q == ratio and basis[k] < basis[leave]):
                    leave, ratio = k, q
        if leave is None:
            raise UnboundedLp("objective is unbounded below")
        if ratio:
            for k, wk in enumerate(w):
                if wk:
                    xb[k] -= ratio * wk
            degenerate = 0
        else:
            degenerate += 1
            bland = bland or degenerate > DEGENERATE_RUN
        xb[leave] = ratio
        basis[leave] = entering
    raise RuntimeError("simplex iteration limit reached")


def _finish(sf: StandardForm, basis: list[int], xb: list) -> LpSolution:
    x = [mpq(0)] * sf.n_struct
    for k, j in enumerate(basis):
        if j < sf.n_struct:
            x[j] = xb[k]
    obj = sum((sf.cost[j] * x[j] for j in range(sf.n_struct) if x[j]), mpq(0))
    return LpSolution(OPTIMAL, to_fraction(obj), tuple(to_fraction(v) for v in x))


def _drive_out_artificials(sf: StandardForm, basis: list[int]) -> None:
    """Swap zero-valued basic artificials for real columns by degenerate pivots.

    An artificial that cannot be swapped sits on a redundant row: every real
    column has a zero entry in its tableau row, so it stays at zero for good.
    """
    m = len(sf.b)
    for k in range(m):
        if basis[k] < sf.n_real:
            continue
        e_k = [mpq(0)] * m
        e_k[k] = mpq(1)
        z = solve_sparse_mpq([sf.cols[j] for j in basis], e_k)
        in_basis = set(basis)
        for j in range(sf.n_real):
            if j not in in_basis and sum((z[r] * v for r, v in sf.cols[j].items()), mpq(0)):
                basis[k] = j
                break


def simplex_exact(lp: LpModel, max_iter: int = 1_000_000) -> LpSolution:
    """Two-phase exact simplex from the slack/artificial basis."""
    sf = standardize(lp)
    m = len(sf.b)
    basis = []
    for r in range(m):
        if r in sf.natural:
            basis.append(sf.natural[r])
        else:
            sf.cols.append({r: mpq(1)})
            basis.append(len(sf.cols) - 1)
    phase1 = [mpq(0)] * sf.n_real + [mpq(1)] * (len(sf.cols) - sf.n_real)
    sf.cost.extend([mpq(0)] * (len(sf.cols) - sf.n_real))
    xb = list(sf.b)
    _iterate(sf, basis, xb, phase1, len(sf.cols), max_iter)
    if sum(xb[k] for k, j in enumerate(basis) if j >= sf.n_real) > 0:
        return LpSolution(INFEASIBLE)
    _drive_out_artificials(sf, basis)
    _iterate(sf, basis, xb, sf.cost, sf.n_real, max_iter)
    return _finish(sf, basis, xb)


def _crash_basis(sf: StandardForm, hint) -> list[int] | None:
    """Pick ``m`` independent real columns, preferring those positive in ``hint``."""
    m = len(sf.b)
    values = list(hint) + [0.0] * (sf.n_real - len(hint))
    # slack values implied by the hint
    for j in range(sf.n_struct, sf.n_real):
        (r, sgn), = sf.cols[j].items()
        lhs = sum(float(v) * values[i] for i, v in _row(sf, r))
        values[j] = (float(sf.b[r]) - lhs) / float(sgn)
    support = sorted((j for j in range(sf.n_real) if values[j] > 1e-9), key=lambda j: -values[j])
    rest = [j for j in range(sf.n_real - 1, -1, -1) if values[j] <= 1e-9]
    chosen: list[int] = []
    pivots: list[tuple[int, dict]] = []
    for j in support + rest:
        v = dict(sf.cols[j])
        for p, u in pivots:
            f = v.get(p)
            if f:
                f = f / u[p]
                for r, x in u.items():
                    nv = v.get(r, 0) - f * x
                    if nv:
                        v[r] = nv
                    else:
                        v.pop(r, None)
        if v:
            p = min(v, key=lambda r: (abs(v[r]) == 0, r))
            pivots.append((p, v))
            chosen.append(j)
            if len(chosen) == m:
                return chosen
    return None


def _row(sf: StandardForm, r: int):
    if not hasattr(sf, "_rows"):
        rows: dict[int, list] = {}
        for j in range(sf.n_struct):
            for rr, v in sf.cols[j].items():
                rows.setdefault(rr, []).append((j, v))
        sf._rows = rows
    return sf._rows.get(r, [])


def simplex_exact_from_hint(lp: LpModel, hint, max_iter: int = 1_000_000) -> LpSolution | None:
    """Phase 2 from a basis guessed from an approximate optimum ``hint``.

    Returns None when the guessed basis is singular or not primal feasible, so the
    caller can fall back to :func:`simplex_exact`.
    """
    sf = standardize(lp)
    if not sf.b:
        return None
    basis = _crash_basis(sf, hint)
    if basis is None:
        return None
    try:
        xb = _solve_basis(sf, basis, dict(enumerate(sf.b)))
    except SingularSystem:
        return None
    if any(x < 0 for x in xb):
        return None
    _iterate(sf, basis, xb, sf.cost, sf.n_real, max_iter)
    return _finish(sf, basis, xb)
