"""CVaR optimization by one LP per VaR guess.

For a guess ``n`` the LP ranges over occupation measures of Markov policies that
are free before index ``n`` and expectation-optimal afterwards. The bracket rows
force the goal to be reached by index ``n`` with probability at least 1-t but by
index ``n-1`` with probability at most 1-t, and the objective is the expected
cost still to come after index ``n``, so ``n + E/t`` is the CVaR of the witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..model import EXACT, AssumptionError, Mdp, Number, NumericMode, require_valid
from ..policy import COST, STEP, Policy
from ..risk import RiskResult
from ..ssp import SspValues, solve_ssp
from .backends import solve_lp
from .model import LpModel, LpSolution

UNIFORM = "uniform"
TOTAL = "total"


def state_var(s: int, i: int) -> str:
    return f"p_s{s}_i{i}"


def action_var(s: int, a: int, i: int) -> str:
    return f"p_s{s}_a{a}_i{i}"


def _pick_mode(m: Mdp, mode: str) -> str:
    if mode == "auto":
        return UNIFORM if m.is_uniform else TOTAL
    if mode == UNIFORM and not m.is_uniform:
        raise ValueError("uniform LP needs unit costs on every non-goal action")
    if mode not in (UNIFORM, TOTAL):
        raise ValueError(f"unknown LP mode {mode!r}")
    return mode


def build_lp(m: Mdp, e: SspValues, t: Number, n: int, mode: str = "auto", numeric: NumericMode = EXACT) -> LpModel:
    if n < 1:
        raise ValueError("VaR guess must be at least 1")
    mode = _pick_mode(m, mode)
    conv = numeric.convert
    trans = m.transitions(numeric)
    target = 1 - conv(t)
    lp = LpModel()
    goals = sorted(m.goals)

    if mode == UNIFORM:
        for i in range(n + 1):
            for s in m.states:
                lp.var(state_var(s, i))
        for i in range(n):
            for s in m.states:
                for a in range(len(m.actions[s])):
                    lp.var(action_var(s, a, i))
        v = lp.index
        for s in m.states:
            lp.add({v[state_var(s, 0)]: 1}, "=", int(s == m.initial), f"init_s{s}")
        for i in range(n):
            for s in m.states:
                row = {v[state_var(s, i)]: 1}
                for a in range(len(m.actions[s])):
                    row[v[action_var(s, a, i)]] = -1
                lp.add(row, "=", 0, f"split_s{s}_i{i}")
            inflow: dict[int, dict[int, Number]] = {s: {v[state_var(s, i + 1)]: 1} for s in m.states}
            for s in m.states:
                for a in range(len(m.actions[s])):
                    col = v[action_var(s, a, i)]
                    for s2, p in trans[s][a]:
                        inflow[s2][col] = inflow[s2].get(col, 0) - p
            for s in m.states:
                lp.add(inflow[s], "=", 0, f"flow_s{s}_i{i + 1}")
        lp.add({v[state_var(g, n - 1)]: 1 for g in goals}, "<=", target, "bracket_lo")
        lp.add({v[state_var(g, n)]: 1 for g in goals}, ">=", target, "bracket_hi")
        lp.minimize({v[state_var(s, n)]: conv(e.e[s]) for s in m.states if e.e[s]})
        return lp

    cmax = m.c_max
    top = n - 1 + cmax
    for j in range(top + 1):
        for s in m.states:
            lp.var(state_var(s, j))
    for j in range(n):
        for s in m.states:
            if s not in m.goals:
                for a in range(len(m.actions[s])):
                    lp.var(action_var(s, a, j))
    v = lp.index
    for s in m.states:
        lp.add({v[state_var(s, 0)]: 1}, "=", int(s == m.initial), f"init_s{s}")
    for j in range(n):
        for s in m.states:
            if s not in m.goals:
                row = {v[state_var(s, j)]: 1}
                for a in range(len(m.actions[s])):
                    row[v[action_var(s, a, j)]] = -1
                lp.add(row, "=", 0, f"split_s{s}_i{j}")
    inflow = {(s, j): {v[state_var(s, j)]: 1} for j in range(1, top + 1) for s in m.states}
    for j in range(n):
        for s in m.states:
            if s in m.goals:
                continue
            for a, act in enumerate(m.actions[s]):
                col = v[action_var(s, a, j)]
                for s2, p in trans[s][a]:
                    row = inflow[(s2, j + act.cost)]
                    row[col] = row.get(col, 0) - p
    for j in range(1, top + 1):
        for s in m.states:
            lp.add(inflow[(s, j)], "=", 0, f"flow_s{s}_i{j}")
    lp.add({v[state_var(g, j)]: 1 for g in goals for j in range(n)}, "<=", target, "bracket_lo")
    lp.add({v[state_var(g, j)]: 1 for g in goals for j in range(n + 1)}, ">=", target, "bracket_hi")
    obj = {}
    for c in range(cmax):
        for s in m.states:
            w = conv(e.e[s]) + c
            if w:
                obj[v[state_var(s, n + c)]] = w
    lp.minimize(obj)
    return lp


def extract_policy(m: Mdp, lp: LpModel, sol: LpSolution, n: int, e: SspValues, mode: str) -> Policy:
    """Prefix from the action shares of each (state, index) flow; zero-flow rows are
    left to the tail."""
    v = lp.index
    prefix = []
    for i in range(n):
        row = {}
        for s in m.states:
            if s in m.goals:
                continue
            total = sol.values[v[state_var(s, i)]]
            if not total or total <= 0:
                continue
            shares = {}
            for a in range(len(m.actions[s])):
                x = sol.values[v[action_var(s, a, i)]]
                if x > 0:
                    shares[a] = x
            norm = sum(shares.values())
            if norm > 0:
                row[s] = {a: x / norm for a, x in shares.items()}
        prefix.append(row)
    return Policy(tuple(prefix), STEP if mode == UNIFORM else COST, e.tail_policy)


class _Reach:
    """Finite-horizon max/min probability of reaching the goal within cost ``n``."""

    def __init__(self, m: Mdp, numeric: NumericMode):
        self.m = m
        self.trans = m.transitions(numeric)
        self.one, self.zero = numeric.convert(1), numeric.convert(0)
        self.hist = {"max": [], "min": []}

    def value(self, kind: str, n: int) -> Number:
        """Reach probability from the initial state within cost ``n`` (``n`` may be
        negative)."""
        if n < 0:
            return self.zero
        h = self.hist[kind]
        pick = max if kind == "max" else min
        while len(h) <= n:
            layer = []
            j = len(h)
            for s in self.m.states:
                if s in self.m.goals:
                    layer.append(self.one)
                    continue
                best = None
                for act, succ in zip(self.m.actions[s], self.trans[s]):
                    k = j - act.cost
                    val = sum((p * h[k][s2] for s2, p in succ), self.zero) if k >= 0 else self.zero
                    best = val if best is None else pick(best, val)
                layer.append(best)
            h.append(layer)
        return h[n][self.m.initial]


@dataclass(frozen=True)
class Guess:
    n: int
    feasible: bool
    objective: Number | None = None
    candidate: Number | None = None


def reach_lower_bound(m: Mdp, t: Number, numeric: NumericMode = EXACT, cap: int | None = None) -> int:
    """Smallest ``n`` such that some policy reaches the goal within cost ``n`` with
    probability at least 1-t; no smaller VaR guess can be feasible."""
    reach = _Reach(m, numeric)
    target = 1 - numeric.convert(t)
    n = 0
    while reach.value("max", n) < target - numeric.epsilon:
        n += 1
        if cap is not None and n > cap:
            raise AssumptionError(f"VaR guess exceeded the bound {cap}")
    return n


def solve_cvar_lp(
    m: Mdp,
    t: Number,
    numeric: NumericMode = EXACT,
    backend: str | None = None,
    mode: str = "auto",
    e: SspValues | None = None,
    on_lp=None,
) -> tuple[RiskResult, Policy, list[Guess]]:
    """Optimal CVaR_t with a witness policy by trying VaR guesses upward.

    Guesses start at the reachability lower bound and stop once the guess exceeds
    the best CVaR seen, since no optimal policy has a VaR above its own CVaR. Ties
    keep the smallest guess. A guess is feasible exactly when the best reach
    probability within ``n`` is at least 1-t and the worst one within ``n-1`` is at
    most 1-t (mix the two extreme policies), which is checked before any LP is
    solved. ``on_lp(n, lp)`` is called for every LP built, e.g. to export it.
    """
    if not 0 < t < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    require_valid(m)
    mode = _pick_mode(m, mode)
    backend = backend or ("exact" if numeric.exact else "float")
    e = e or solve_ssp(m, numeric)
    tq = numeric.convert(t)
    target = 1 - tq
    cap = math.ceil(float(e.e[m.initial]) / float(tq) * (1 + 1e-9)) + 2
    reach = _Reach(m, numeric)
    n = reach_lower_bound(m, t, numeric, cap)
    n = max(n, 1)
    best: tuple | None = None
    guesses: list[Guess] = []
    slack = numeric.epsilon
    while best is None or n <= best[0]:
        if n > cap:
            raise AssumptionError(f"VaR guess exceeded the bound {cap}")
        if reach.value("min", n - 1) > target + slack:
            guesses.append(Guess(n, False))
            if best is None:
                raise AssumptionError("no feasible VaR guess")
            break  # the worst-case reach only grows, so every later guess fails too
        if reach.value("max", n) < target - slack:
            guesses.append(Guess(n, False))
            n += 1
            continue
        lp = build_lp(m, e, t, n, mode, numeric)
        if on_lp is not None:
            on_lp(n, lp)
        sol = solve_lp(lp, backend)
        if not sol.optimal:
            if numeric.exact:
                raise RuntimeError(f"LP at guess {n} is infeasible despite the reachability bracket")
            guesses.append(Guess(n, False))
            n += 1
            continue
        cand = n + sol.objective / tq
        guesses.append(Guess(n, True, sol.objective, cand))
        if best is None or (cand < best[0] if numeric.exact else cand < best[0] - 1e-9 * max(1.0, abs(best[0]))):
            best = (cand, n, lp, sol)
        n += 1
    cand, var_n, lp, sol = best
    policy = extract_policy(m, lp, sol, var_n, e, mode)
    return RiskResult(var_n, cand), policy, guesses
