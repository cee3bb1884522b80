"""CVaR by value iteration over Pareto polygons.

Layer ``n`` holds, for every state, the polygon of pairs (p, E) such that some
policy reaches the goal within cost ``n`` with probability at least ``p`` while the
expected cost still to come beyond ``n`` is at most ``E``. Each threshold's
candidate at layer ``n`` is ``n + E/t`` with E read off at ``p = 1 - t``.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable

from .model import EXACT, AssumptionError, Mdp, Number, NumericMode, ThresholdQuery, require_valid
from .pareto import ParetoPolygon, hull_union, minkowski_sum
from .policy import COST, STEP, Policy
from .risk import RiskResult
from .ssp import SspValues, solve_ssp

WITNESS_STATE_LIMIT = 10


class Layers:
    """The last ``depth`` layers; indices below zero are synthesized on demand."""

    def __init__(self, m: Mdp, e: SspValues, numeric: NumericMode, keep_all: bool = False):
        self.m = m
        self.e = [numeric.convert(x) for x in e.e]
        self.zero, self.one = numeric.convert(0), numeric.convert(1)
        self.depth = max(1, m.c_max)
        self.keep_all = keep_all
        self.buf: deque[list[ParetoPolygon]] = deque()
        self.history: list[list[ParetoPolygon]] = []
        self.top = -1
        self._goal = ParetoPolygon.point(self.one, self.zero)

    def base(self, s: int, n: int) -> ParetoPolygon:
        """Layers at or below zero: nothing can have arrived yet (unless already at
        the goal at n = 0) and the expected overshoot is e(s) - n."""
        if s in self.m.goals:
            return self._goal if n == 0 else ParetoPolygon.point(self.zero, self.zero - n)
        return ParetoPolygon.point(self.zero, self.e[s] - n)

    def get(self, n: int, s: int) -> ParetoPolygon:
        if n < 0:
            return self.base(s, n)
        if n > self.top or n <= self.top - len(self.buf):
            if self.keep_all and 0 <= n <= self.top:
                return self.history[n][s]
            raise IndexError(f"layer {n} no longer buffered")
        return self.buf[n - self.top - 1][s]

    def push(self, layer: list[ParetoPolygon]) -> None:
        self.buf.append(layer)
        if len(self.buf) > self.depth:
            self.buf.popleft()
        if self.keep_all:
            self.history.append(layer)
        self.top += 1


def pareto_step(m: Mdp, layers: Layers, s: int, trans, tol: float = 0) -> ParetoPolygon:
    """Polygon of ``s`` at index ``layers.top + 1``; vertex tags are
    ``(action, successor vertex indices)``."""
    if s in m.goals:
        return layers._goal
    n = layers.top + 1
    per_action = []
    for a, (act, succ) in enumerate(zip(m.actions[s], trans[s])):
        parts = [layers.get(n - act.cost, s2).scale(p) for s2, p in succ]
        summed = minkowski_sum(parts, tol)
        per_action.append(ParetoPolygon(summed.points, [(a, idx) for idx in summed.tags]))
    return hull_union(per_action, tol)


def pareto_layers(m: Mdp, n_max: int, numeric: NumericMode = EXACT, e: SspValues | None = None):
    """Yield ``(n, polygons)`` for layers ``0..n_max``."""
    require_valid(m)
    e = e or solve_ssp(m, numeric)
    trans = m.transitions(numeric)
    tol = 0 if numeric.exact else numeric.epsilon
    layers = Layers(m, e, numeric)
    layers.push([layers.base(s, 0) for s in m.states])
    yield 0, layers.buf[-1]
    for n in range(1, n_max + 1):
        layers.push([pareto_step(m, layers, s, trans, tol) for s in m.states])
        yield n, layers.buf[-1]


@dataclass
class _Best:
    t: Number
    cvar: Number | None = None
    n: int | None = None
    e_at: Number | None = None


def solve_cvar_vi(
    m: Mdp,
    q: ThresholdQuery | Iterable,
    numeric: NumericMode = EXACT,
    trace: IO | None = None,
    witness: bool = False,
    merge_tol: float = 0,
    e: SspValues | None = None,
) -> dict:
    """Optimal VaR/CVaR for every threshold from one pass over the layers.

    Returns ``{t: RiskResult}``, or ``{t: (RiskResult, Policy)}`` when ``witness`` is
    set (models with at most ten states). Iteration stops once the layer index
    exceeds every threshold's best CVaR; ties keep the smallest index.
    """
    if not isinstance(q, ThresholdQuery):
        q = ThresholdQuery.of(q)
    require_valid(m)
    if witness and m.n_states > WITNESS_STATE_LIMIT:
        raise ValueError(f"witness extraction is limited to {WITNESS_STATE_LIMIT} states; use the LP engine")
    e = e or solve_ssp(m, numeric)
    trans = m.transitions(numeric)
    tol = 0 if numeric.exact else numeric.epsilon
    layers = Layers(m, e, numeric, keep_all=witness)
    bests = [_Best(numeric.convert(t)) for t in q]
    t_min = min(b.t for b in bests)
    cap = math.ceil(float(e.e[m.initial]) / float(t_min) * (1 + 1e-9)) + 2

    writer = None
    if trace is not None:
        writer = csv.writer(trace)
        writer.writerow(["n", *(f"v_{s}" for s in m.states), *(f"c_{b.t}" for b in bests)])

    layers.push([layers.base(s, 0) for s in m.states])
    n = 0
    while True:
        poly = layers.get(n, m.initial)
        for b in bests:
            val = poly.query_min_E(1 - b.t, tol)
            if val is None:
                continue
            cand = n + val / b.t
            better = b.cvar is None or (cand < b.cvar if numeric.exact else cand < b.cvar - 1e-9 * max(1.0, abs(b.cvar)))
            if better:
                b.cvar, b.n, b.e_at = cand, n, val
        if writer is not None:
            writer.writerow([n, *(len(layers.get(n, s)) for s in m.states),
                             *("" if b.cvar is None else float(b.cvar) for b in bests)])
        if all(b.cvar is not None and n + 1 > b.cvar for b in bests):
            break
        if n >= cap:
            raise AssumptionError(f"value iteration exceeded the bound {cap}")
        nxt = []
        for s in m.states:
            poly = pareto_step(m, layers, s, trans, tol)
            if merge_tol:
                poly = poly.merge_vertices(merge_tol)
            nxt.append(poly)
        layers.push(nxt)
        n += 1

    out = {}
    for b in bests:
        res = RiskResult(b.n, b.cvar)
        out[b.t] = (res, _witness(m, layers, b, e, numeric)) if witness else res
    return out


def _witness(m: Mdp, layers: Layers, b: _Best, e: SspValues, numeric: NumericMode) -> Policy:
    """Markov policy whose (state, cost) occupation matches the boundary point.

    Each vertex at layer ``k`` encodes a deterministic choice plus the successor
    vertices it continues with; the boundary point mixes at most two vertices.
    Pushing probability mass through (state, layer, vertex) nodes and averaging the
    chosen actions per (state, accumulated cost) gives a policy with the same
    occupation measure, hence the same reach probability and overshoot.
    """
    n = b.n
    zero = numeric.convert(0)
    poly = layers.get(n, m.initial)
    i, j, lam = poly.bracket(1 - b.t)
    frontier: dict[tuple[int, int, int], Number] = {}
    for v, w in ((i, lam), (j, 1 - lam)):
        if w:
            frontier[(m.initial, n, v)] = frontier.get((m.initial, n, v), zero) + w
    occ: dict[tuple[int, int], dict[int, Number]] = {}
    # budgets only shrink, so processing in decreasing budget visits each node once
    while frontier:
        budget = max(k[1] for k in frontier)
        todo = [(k, w) for k, w in frontier.items() if k[1] == budget]
        for k, _ in todo:
            del frontier[k]
        for (s, k, v), w in todo:
            if s in m.goals or k <= 0:
                continue
            a, succ_idx = layers.get(k, s).tags[v]
            row = occ.setdefault((s, n - k), {})
            row[a] = row.get(a, zero) + w
            act = m.actions[s][a]
            for (s2, p), v2 in zip(act.successors, succ_idx):
                key = (s2, k - act.cost, v2)
                frontier[key] = frontier.get(key, zero) + w * numeric.convert(p)
    prefix = [dict() for _ in range(n)]
    for (s, i_cost), row in occ.items():
        total = sum(row.values())
        if total > 0:
            prefix[i_cost][s] = {a: x / total for a, x in row.items() if x > 0}
    return Policy(tuple(prefix), STEP if m.is_uniform else COST, e.tail_policy)
