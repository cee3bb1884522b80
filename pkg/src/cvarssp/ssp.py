"""Expected-cost stochastic shortest path: optimal values and stationary policies."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .linalg import solve_sparse
from .model import EXACT, AssumptionError, Mdp, Number, NumericMode, require_valid

VI_TOLERANCE = 1e-9


class ImproperPolicyError(AssumptionError):
    def __init__(self, state: int):
        self.state = state
        super().__init__(f"policy is improper: goal unreachable from state {state}")


@dataclass(frozen=True)
class SspValues:
    """Optimal expected cost-to-goal ``e`` and a proper policy attaining it."""

    e: tuple[Number, ...]
    tail_policy: tuple[int, ...]


def check_proper(m: Mdp, policy: Sequence[int]) -> None:
    """Raise :class:`ImproperPolicyError` naming a state that cannot reach the goal."""
    preds: dict[int, list[int]] = {}
    for s in m.states:
        if s in m.goals:
            continue
        for t, _ in m.actions[s][policy[s]].successors:
            preds.setdefault(t, []).append(s)
    seen = set(m.goals)
    queue = deque(m.goals)
    while queue:
        t = queue.popleft()
        for s in preds.get(t, ()):
            if s not in seen:
                seen.add(s)
                queue.append(s)
    for s in m.states:
        if s not in seen:
            raise ImproperPolicyError(s)


def evaluate_policy_expectation(m: Mdp, policy: Sequence[int], mode: NumericMode = EXACT) -> tuple[Number, ...]:
    """Expected accumulated cost to the goal of a stationary deterministic policy."""
    check_proper(m, policy)
    trans = m.transitions(mode)
    nongoal = [s for s in m.states if s not in m.goals]
    pos = {s: i for i, s in enumerate(nongoal)}
    rows, rhs = [], []
    for s in nongoal:
        a = policy[s]
        row = {pos[s]: mode.convert(1)}
        for t, p in trans[s][a]:
            if t in pos:
                row[pos[t]] = row.get(pos[t], 0) - p
        rows.append(row)
        rhs.append(mode.convert(m.actions[s][a].cost))
    x = solve_sparse(rows, rhs, mode.exact) if rows else []
    zero = mode.convert(0)
    return tuple(x[pos[s]] if s in pos else zero for s in m.states)


def _q_values(m: Mdp, s: int, e: Sequence[Number], trans) -> list[Number]:
    return [a.cost + sum(p * e[t] for t, p in succ) for a, succ in zip(m.actions[s], trans[s])]


def _value_iteration(m: Mdp, tol: float = VI_TOLERANCE, max_iter: int = 10_000_000) -> tuple[np.ndarray, bool]:
    """Float value iteration from v = 0 until the absolute residual drops below ``tol``."""
    pairs, costs, starts = [], [], []
    data, ri, ci = [], [], []
    for s in m.states:
        starts.append(len(pairs))
        for a in m.actions[s]:
            row = len(pairs)
            pairs.append(s)
            costs.append(a.cost)
            for t, p in a.successors:
                ri.append(row)
                ci.append(t)
                data.append(float(p))
    big_p = csr_matrix((data, (ri, ci)), shape=(len(pairs), m.n_states))
    cost = np.asarray(costs, dtype=float)
    starts = np.asarray(starts)
    v = np.zeros(m.n_states)
    for _ in range(max_iter):
        q = cost + big_p @ v
        nv = np.minimum.reduceat(q, starts)
        res = np.max(np.abs(nv - v)) if len(v) else 0.0
        v = nv
        if res <= tol:
            return v, True
    return v, False


def _greedy(m: Mdp, e: Sequence[Number], trans, tol) -> list[int]:
    policy = []
    for s in m.states:
        if s in m.goals:
            policy.append(0)
            continue
        q = _q_values(m, s, e, trans)
        best = min(q)
        policy.append(next(i for i, v in enumerate(q) if v <= best + tol))
    return policy


def solve_ssp(m: Mdp, mode: NumericMode = EXACT) -> SspValues:
    """Minimal expected cost to the goal from every state.

    Exact mode runs policy iteration with exact linear solves, seeded with the greedy
    policy of a float value iteration. Float mode stops value iteration at residual
    1e-9 and evaluates the greedy policy once. Ties go to the lowest action index.
    """
    report = require_valid(m)
    trans = m.transitions(mode)
    approx, converged = _value_iteration(m, max_iter=200_000 if mode.exact else 10_000_000)
    if not converged and not mode.exact:
        raise AssumptionError("value iteration did not converge")
    seed = _greedy(m, list(approx), m.transitions(NumericMode(False, 1.0)), 1e-12 * (1 + float(np.max(approx, initial=0))))
    try:
        check_proper(m, seed)
        policy = seed
    except ImproperPolicyError:
        policy = list(report.proper_policy)

    if not mode.exact:
        e = evaluate_policy_expectation(m, policy, mode)
        return SspValues(e, tuple(policy))

    while True:
        e = evaluate_policy_expectation(m, policy, mode)
        changed = False
        for s in m.states:
            if s in m.goals:
                continue
            q = _q_values(m, s, e, trans)
            best = min(q)
            if q[policy[s]] > best:
                policy[s] = q.index(best)
                changed = True
        if not changed:
            break
    final = _greedy(m, e, trans, 0)
    return SspValues(e, tuple(final))


def bellman_residual(m: Mdp, values: SspValues, mode: NumericMode = EXACT) -> Number:
    trans = m.transitions(mode)
    worst = mode.convert(0)
    for s in m.states:
        if s in m.goals:
            continue
        worst = max(worst, abs(min(_q_values(m, s, values.e, trans)) - values.e[s]))
    return worst
