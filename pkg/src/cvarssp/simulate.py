"""Monte-Carlo audit of a policy's cost distribution."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .model import AssumptionError, Mdp, ThresholdQuery, float_mode
from .policy import COST, Policy, policy_risk
from .risk import CostDistribution, RiskResult, cvar, var

CHUNK = 65536
Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimReport:
    samples: int
    completed: int
    censored: int
    horizon: int
    seed: int
    distribution: CostDistribution
    mean: float
    mean_half_width: float
    results: dict = field(default_factory=dict)  # t -> RiskResult
    half_width: dict = field(default_factory=dict)  # t -> 95% half-width of the CVaR estimate

    def contains(self, t, value) -> bool:
        t = float(t)
        return abs(float(self.results[t].cvar) - float(value)) <= self.half_width[t]


class _Tables:
    """Dense sampling tables for a policy on a model."""

    def __init__(self, m: Mdp, pi: Policy):
        n = m.n_states
        L = len(pi.prefix)
        max_a = max(len(a) for a in m.actions)
        self.L = L
        self.cost_index = pi.indexing == COST
        # action CDFs per (index, state); row L is the tail
        acdf = np.zeros((L + 1, n, max_a))
        for i in range(L + 1):
            for s in m.states:
                dist = pi.action_distribution(s, i)
                probs = np.zeros(max_a)
                for a, p in dist.items():
                    probs[a] = float(p)
                acdf[i, s] = np.cumsum(probs / probs.sum())
        acdf[..., -1] = 1.0
        self.acdf = acdf
        self.pair = np.zeros((n, max_a), dtype=np.int64)
        costs, tgts, cdfs = [], [], []
        width = max(len(a.successors) for acts in m.actions for a in acts)
        for s in m.states:
            for a, act in enumerate(m.actions[s]):
                self.pair[s, a] = len(costs)
                costs.append(act.cost)
                t = np.full(width, act.successors[-1][0], dtype=np.int64)
                c = np.ones(width)
                ps = np.cumsum([float(p) for _, p in act.successors])
                t[: len(act.successors)] = [x for x, _ in act.successors]
                c[: len(ps)] = ps
                c[len(ps) - 1:] = 1.0
                tgts.append(t)
                cdfs.append(c)
        self.cost = np.asarray(costs, dtype=np.int64)
        self.tgt = np.asarray(tgts)
        self.scdf = np.asarray(cdfs)
        self.goal = np.zeros(n, dtype=bool)
        self.goal[list(m.goals)] = True


def _run_chunk(tab: _Tables, initial: int, size: int, horizon: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    state = np.full(size, initial, dtype=np.int64)
    index = np.zeros(size, dtype=np.int64)
    cost = np.zeros(size, dtype=np.int64)
    active = np.flatnonzero(~tab.goal[state])
    while active.size:
        s, i = state[active], index[active]
        u = rng.random(active.size)
        a = (u[:, None] >= tab.acdf[i, s]).sum(axis=1)
        a = np.minimum(a, tab.acdf.shape[2] - 1)
        pair = tab.pair[s, a]
        v = rng.random(active.size)
        k = (v[:, None] >= tab.scdf[pair]).sum(axis=1)
        k = np.minimum(k, tab.scdf.shape[1] - 1)
        state[active] = tab.tgt[pair, k]
        step = tab.cost[pair]
        cost[active] += step
        index[active] = np.minimum(i + (step if tab.cost_index else 1), tab.L)
        keep = ~tab.goal[state[active]] & (cost[active] <= horizon)
        active = active[keep]
    censored = int((~tab.goal[state]).sum())
    return cost[tab.goal[state]], censored


def simulate_policy(
    m: Mdp,
    pi: Policy,
    q: ThresholdQuery,
    samples: int,
    seed: int = 0,
    horizon: int | None = None,
    engine_cvar=None,
) -> SimReport:
    """Sample ``samples`` runs of ``pi`` and estimate VaR/CVaR for each threshold.

    Runs whose cost passes ``horizon`` are stopped and counted as censored, never
    folded into the distribution. By default the horizon is ten times the largest
    engine CVaR (computed here if not supplied). Chunks draw from independent
    streams spawned from ``seed``, so results do not depend on chunking order.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not isinstance(q, ThresholdQuery):
        q = ThresholdQuery.of(q)
    pi.check(m)
    if horizon is None:
        if engine_cvar is None:
            exact = policy_risk(m, pi, [min(q)], float_mode())
            engine_cvar = max(float(r.cvar) for r in exact.values())
        horizon = max(1, math.ceil(10 * float(engine_cvar)))
    tab = _Tables(m, pi)
    n_chunks = -(-samples // CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    parts, censored = [], 0
    for c, ss in enumerate(streams):
        size = min(CHUNK, samples - c * CHUNK)
        costs, cens = _run_chunk(tab, m.initial, size, horizon, np.random.default_rng(ss))
        parts.append(costs)
        censored += cens
    if censored > samples / 2:
        raise AssumptionError(f"{censored} of {samples} runs exceeded the horizon {horizon}; the tail policy looks improper")
    x = np.concatenate(parts)
    if x.size == 0:
        raise AssumptionError("no run reached the goal")
    counts = np.bincount(x)
    n = x.size
    # exact frequencies, so a degenerate sample gives exact risk values
    dist = CostDistribution({int(c): Fraction(int(k), n) for c, k in enumerate(counts) if k})
    mean = float(x.mean())
    mean_hw = Z95 * float(x.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    results, hw = {}, {}
    for t in q:
        tf = float(t)
        v = var(dist, t)
        results[tf] = RiskResult(v, float(cvar(dist, t)))
        excess = np.maximum(x - v, 0)
        hw[tf] = Z95 * float(excess.std(ddof=1)) / (tf * math.sqrt(n)) if n > 1 else 0.0
    return SimReport(samples, n, censored, horizon, seed, dist, mean, mean_hw, results, hw)
