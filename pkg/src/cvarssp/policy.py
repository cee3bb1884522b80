"""Finite-prefix Markov policies with a stationary tail, and their exact evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .model import EXACT, Mdp, ModelError, Number, NumericMode, make_mdp, parse_number
from .risk import RiskResult
from .ssp import check_proper, evaluate_policy_expectation

STEP = "step"
COST = "cost"


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    """``prefix[i][s]`` maps action index -> probability for index ``i`` below the
    prefix length; the index counts steps or accumulated cost depending on
    ``indexing``. States missing from a prefix row, and all indices past the prefix,
    follow the deterministic ``tail``."""

    prefix: tuple[Mapping[int, Mapping[int, Number]], ...]
    indexing: str
    tail: tuple[int, ...]

    def __post_init__(self):
        if self.indexing not in (STEP, COST):
            raise PolicyError(f"unknown indexing {self.indexing!r}")

    def __len__(self):
        return len(self.prefix)

    def action_distribution(self, s: int, i: int) -> Mapping[int, Number]:
        if i < len(self.prefix):
            row = self.prefix[i].get(s)
            if row:
                return row
        return {self.tail[s]: 1}

    @property
    def is_deterministic(self) -> bool:
        return all(len([p for p in dist.values() if p]) <= 1 for row in self.prefix for dist in row.values())

    def next_index(self, i: int, cost: int) -> int:
        i += cost if self.indexing == COST else 1
        return min(i, len(self.prefix))

    def check(self, m: Mdp, tol: float = 1e-9) -> None:
        if len(self.tail) != m.n_states:
            raise PolicyError(f"tail covers {len(self.tail)} states, model has {m.n_states}")
        for s, a in enumerate(self.tail):
            if not 0 <= a < len(m.actions[s]):
                raise PolicyError(f"tail action {a} invalid at state {s}")
        check_proper(m, self.tail)
        for i, row in enumerate(self.prefix):
            for s, dist in row.items():
                if not 0 <= s < m.n_states:
                    raise PolicyError(f"prefix row {i} names unknown state {s}")
                total = 0
                for a, p in dist.items():
                    if not 0 <= a < len(m.actions[s]) or p < 0:
                        raise PolicyError(f"bad prefix entry at index {i}, state {s}")
                    total += p
                exact = all(isinstance(p, (int, Fraction)) for p in dist.values())
                if (total != 1) if exact else abs(total - 1) > tol:
                    raise PolicyError(f"prefix distribution at index {i}, state {s} sums to {total}")


def stationary(tail: Iterable[int], indexing: str = STEP) -> Policy:
    return Policy((), indexing, tuple(tail))


def policy_risk(m: Mdp, policy: Policy, thresholds: Iterable, mode: NumericMode = EXACT) -> dict:
    """VaR and CVaR of the accumulated cost under ``policy`` for every threshold.

    Mass is pushed through (state, index) nodes in order of accumulated cost. Once
    the VaR is known and all remaining mass has entered the tail, the leftover tail
    expectation is added in closed form using the tail's expected cost-to-goal.
    """
    thresholds = sorted({mode.convert(t) for t in thresholds}, reverse=True)
    if not thresholds:
        return {}
    trans = m.transitions(mode)
    e_tail = evaluate_policy_expectation(m, policy.tail, mode)
    L = len(policy.prefix)
    one, zero = mode.convert(1), mode.convert(0)
    buckets: dict[int, dict[tuple[int, int], Number]] = {0: {(m.initial, 0): one}}
    done: dict[int, Number] = {}
    remaining = one  # P[X > c] after processing bucket c
    vars_found: dict = {}
    pending_prefix = 1 if L else 0  # nodes with index below L still waiting
    c = -1
    while True:
        c += 1
        bucket = buckets.pop(c, {})
        for (s, i), mass in bucket.items():
            if i < L:
                pending_prefix -= 1
            if s in m.goals:
                done[c] = done.get(c, zero) + mass
                continue
            for a, pa in policy.action_distribution(s, i).items():
                if not pa:
                    continue
                act = m.actions[s][a]
                j = policy.next_index(i, act.cost)
                target = buckets.setdefault(c + act.cost, {})
                for s2, p in trans[s][a]:
                    key = (s2, j)
                    if key not in target:
                        target[key] = zero
                        if j < L:
                            pending_prefix += 1
                    target[key] += mass * pa * p
        remaining -= done.get(c, zero)
        for t in thresholds:
            if t not in vars_found and remaining <= t + mode.epsilon:
                vars_found[t] = c
        if len(vars_found) == len(thresholds) and pending_prefix == 0:
            break
    out = {}
    for t in thresholds:
        v = vars_found[t]
        excess = sum(((x - v) * p for x, p in done.items() if x > v), zero)
        for cb, bucket in buckets.items():
            for (s, _), mass in bucket.items():
                excess += mass * (cb - v + e_tail[s])
        out[t] = RiskResult(v, v + excess / t)
    return out


def policy_cost_distribution(m: Mdp, policy: Policy, max_cost: int, mode: NumericMode = EXACT) -> tuple[dict, Number]:
    """Exact probabilities of each accumulated cost up to ``max_cost`` and the mass
    that has not reached the goal by then."""
    trans = m.transitions(mode)
    zero = mode.convert(0)
    buckets = {0: {(m.initial, 0): mode.convert(1)}}
    done: dict[int, Number] = {}
    for c in range(max_cost + 1):
        for (s, i), mass in buckets.pop(c, {}).items():
            if s in m.goals:
                done[c] = done.get(c, zero) + mass
                continue
            for a, pa in policy.action_distribution(s, i).items():
                act = m.actions[s][a]
                j = policy.next_index(i, act.cost)
                target = buckets.setdefault(c + act.cost, {})
                for s2, p in trans[s][a]:
                    target[(s2, j)] = target.get((s2, j), zero) + mass * pa * p
    rest = sum((mass for b in buckets.values() for mass in b.values()), zero)
    return done, rest


def induced_chain(m: Mdp, policy: Policy) -> Mdp:
    """The Markov chain of ``m`` under ``policy`` with every cost-c move unrolled into
    c unit steps, so that its step count equals the original accumulated cost.

    Nodes are (state, index) pairs reachable from the initial state; all goal nodes
    are merged into one goal.
    """
    ids: dict[object, int] = {}
    edges: dict[int, dict[int, Fraction]] = {}

    def node(key) -> int:
        if key not in ids:
            ids[key] = len(ids)
        return ids[key]

    goal_key = "goal"
    start = (m.initial, 0)
    node(start)
    node(goal_key)
    stack = [start]
    seen = {start}
    while stack:
        s, i = key = stack.pop()
        src = node(key)
        out: dict[int, Fraction] = {}
        for a, pa in policy.action_distribution(s, i).items():
            if not pa:
                continue
            act = m.actions[s][a]
            j = policy.next_index(i, act.cost)
            # a cost-c action becomes c-1 private relay nodes followed by the jump
            first = src
            if act.cost > 1:
                relays = [node((key, a, r)) for r in range(1, act.cost)]
                out[relays[0]] = out.get(relays[0], 0) + pa
                for x, y in zip(relays, relays[1:]):
                    edges[x] = {y: Fraction(1)}
                first = relays[-1]
                branch = edges.setdefault(first, {})
                weight = Fraction(1)
            else:
                branch = out
                weight = pa
            for s2, p in act.successors:
                k2 = goal_key if s2 in m.goals else (s2, j)
                tgt = node(k2)
                branch[tgt] = branch.get(tgt, 0) + weight * p
                if k2 != goal_key and k2 not in seen:
                    seen.add(k2)
                    stack.append(k2)
        edges[src] = out
    actions = {s: [("go", 1, list(succ.items()))] for s, succ in edges.items()}
    return make_mdp(len(ids), actions, ids[start], [ids[goal_key]])


# --------------------------------------------------------------------------- text format


def dump_policy(m: Mdp, policy: Policy) -> str:
    lines = [f"policy indexing={policy.indexing} length={len(policy.prefix)} states={m.n_states}"]
    for i, row in enumerate(policy.prefix):
        for s in sorted(row):
            for a, p in sorted(row[s].items()):
                if p:
                    lines.append(f"{i} {s} {m.actions[s][a].label} {_fmt(p)}")
    lines.append("tail")
    for s in m.states:
        if s not in m.goals:
            lines.append(f"{s} {m.actions[s][policy.tail[s]].label}")
    return "\n".join(lines) + "\n"


def _fmt(p) -> str:
    if isinstance(p, Fraction):
        return str(p)
    return repr(float(p))


def load_policy(m: Mdp, text: str) -> Policy:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("policy"):
        raise PolicyError("missing 'policy' header")
    header = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    try:
        indexing, length, n_states = header["indexing"], int(header["length"]), int(header["states"])
    except (KeyError, ValueError) as exc:
        raise PolicyError(f"malformed policy header: {lines[0]}") from exc
    if n_states != m.n_states:
        raise PolicyError(f"policy is for {n_states} states, model has {m.n_states}")
    prefix: list[dict] = [{} for _ in range(length)]
    tail = [0] * m.n_states
    in_tail = False
    for ln in lines[1:]:
        parts = ln.split()
        if ln == "tail":
            in_tail = True
            continue
        try:
            if in_tail:
                s, label = int(parts[0]), parts[1]
                tail[s] = m.action_index(s, label)
            else:
                i, s, label, p = int(parts[0]), int(parts[1]), parts[2], parse_number(parts[3])
                prefix[i].setdefault(s, {})[m.action_index(s, label)] = p
        except (IndexError, ValueError, KeyError, ModelError) as exc:
            raise PolicyError(f"bad policy line: {ln!r}") from exc
    pol = Policy(tuple(prefix), indexing, tuple(tail))
    pol.check(m)
    return pol
