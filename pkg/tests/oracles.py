"""Reference computations that share no code with the engines.

Everything here is deliberately naive: explicit path unrolling, plain
``fractions`` arithmetic and direct evaluation of the risk formulas.
"""

from __future__ import annotations

import itertools
from fractions import Fraction


def tail_var(dist: dict[int, Fraction], t: Fraction) -> int:
    for v in sorted(dist):
        if sum(p for x, p in dist.items() if x > v) <= t:
            return v
    return max(dist)


def tail_cvar(dist: dict[int, Fraction], t: Fraction) -> Fraction:
    """CVaR as the minimum over w of w + E[(X - w)^+] / t, scanning integer w."""
    return min(w + sum(p * (x - w) for x, p in dist.items() if x > w) / t for w in range(0, max(dist) + 1))


def unroll(m, choose, max_cost: int) -> tuple[dict[int, Fraction], Fraction]:
    """Exact cost distribution up to ``max_cost`` by expanding every path.

    ``choose(s, cost_so_far)`` returns the action index to take. Returns the
    distribution of completed runs and the mass still running at ``max_cost``.
    """
    dist: dict[int, Fraction] = {}
    pending = Fraction(0)
    stack = [(m.initial, 0, Fraction(1))]
    while stack:
        s, c, w = stack.pop()
        if s in m.goals:
            dist[c] = dist.get(c, Fraction(0)) + w
            continue
        if c >= max_cost:
            pending += w
            continue
        act = m.actions[s][choose(s, c)]
        for t, p in act.successors:
            stack.append((t, c + act.cost, w * p))
    return dist, pending


def expected_cost(m, stationary: list[int], rounds: int = 20000) -> float:
    """Float value iteration for one stationary policy."""
    v = [0.0] * m.n_states
    for _ in range(rounds):
        v = [0.0 if s in m.goals else m.actions[s][stationary[s]].cost
             + sum(float(p) * v[t] for t, p in m.actions[s][stationary[s]].successors) for s in m.states]
    return v[m.initial]


def geometric_cvar(t: Fraction) -> Fraction:
    """CVaR of P[X = k] = 2^-k for k >= 1, from the closed-form tails
    P[X > n] = 2^-n and E[(X - n)^+] = 2^(1-n)."""
    n = 0
    while Fraction(1, 2 ** n) > t:
        n += 1
    return n + Fraction(2, 2 ** n) / t


def deterministic_prefixes(m, horizon: int):
    """Yield every deterministic choice table over the (state, cost) nodes reachable
    below ``horizon`` as dicts {(s, c): action}. Nodes are branched in cost order
    so only choices that matter are enumerated."""

    def rec(frontier: set, table: dict):
        live = sorted((s, c) for s, c in frontier if c < horizon and s not in m.goals and len(m.actions[s]) >= 1)
        if not live:
            yield dict(table)
            return
        c0 = live[0][1]
        layer = [n for n in live if n[1] == c0]
        rest = {n for n in frontier if n not in layer}
        options = [range(len(m.actions[s])) for s, _ in layer]
        for pick in itertools.product(*options):
            nxt = set(rest)
            for (s, c), a in zip(layer, pick):
                table[(s, c)] = a
                act = m.actions[s][a]
                for t, _ in act.successors:
                    nxt.add((t, c + act.cost))
            yield from rec(nxt, table)
            for n in layer:
                table.pop(n, None)

    yield from rec({(m.initial, 0)}, {})


def stationary_expectation(m, choice: list[int]) -> list[Fraction]:
    """Expected cost to the goal under a stationary choice, by Gauss-Jordan
    elimination on (I - P) v = c over the non-goal states."""
    idx = [s for s in m.states if s not in m.goals]
    pos = {s: i for i, s in enumerate(idx)}
    k = len(idx)
    rows = []
    for s in idx:
        act = m.actions[s][choice[s]]
        row = [Fraction(0)] * (k + 1)
        row[pos[s]] += 1
        for t, p in act.successors:
            if t in pos:
                row[pos[t]] -= p
        row[k] = Fraction(act.cost)
        rows.append(row)
    for col in range(k):
        piv = next(r for r in range(col, k) if rows[r][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        lead = rows[col][col]
        rows[col] = [x / lead for x in rows[col]]
        for r in range(k):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    out = [Fraction(0)] * m.n_states
    for s in idx:
        out[s] = rows[pos[s]][k]
    return out


def table_cvar(m, table: dict, tail: list[int], e_tail: list[Fraction], horizon: int, t: Fraction):
    """Exact CVaR_t of the policy that follows ``table`` at (state, cost) nodes below
    ``horizon`` and ``tail`` elsewhere; None when more than t of the mass is still
    running at the horizon (the VaR could then lie beyond it)."""
    done: dict[int, Fraction] = {}
    pending: list[tuple[int, int, Fraction]] = []
    nodes = {(m.initial, 0): Fraction(1)}
    while nodes:
        c = min(cc for _, cc in nodes)
        layer = [(s, w) for (s, cc), w in nodes.items() if cc == c]
        for s, _ in layer:
            del nodes[(s, c)]
        for s, w in layer:
            if s in m.goals:
                done[c] = done.get(c, Fraction(0)) + w
            elif c >= horizon:
                pending.append((s, c, w))
            else:
                act = m.actions[s][table.get((s, c), tail[s])]
                for s2, p in act.successors:
                    key = (s2, c + act.cost)
                    nodes[key] = nodes.get(key, Fraction(0)) + w * p
    if sum(w for _, _, w in pending) > t:
        return None

    def objective(v):
        tail_part = sum(w * (c - v + e_tail[s]) for s, c, w in pending)
        return v + (sum(p * (x - v) for x, p in done.items() if x > v) + tail_part) / t

    return min(objective(v) for v in range(horizon + 1))


def choice_nodes(m, horizon: int) -> int:
    """Upper bound on the number of deterministic tables: product of action counts
    over every (state, cost) node reachable below the horizon under some choice."""
    seen = {(m.initial, 0)}
    stack = [(m.initial, 0)]
    while stack:
        s, c = stack.pop()
        if s in m.goals or c >= horizon:
            continue
        for act in m.actions[s]:
            for t, _ in act.successors:
                key = (t, c + act.cost)
                if key not in seen:
                    seen.add(key)
                    stack.append(key)
    total = 1
    for s, c in seen:
        if s not in m.goals and c < horizon:
            total *= len(m.actions[s])
    return total
