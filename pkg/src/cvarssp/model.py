"""Explicit-state MDP representation, the text model format, and assumption checks."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

Number = Union[Fraction, float]

GOAL_LOOP_LABEL = "loop"


class ModelError(ValueError):
    """Raised for malformed model text or structurally invalid models."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AssumptionError(RuntimeError):
    """A solver refused a model, or detected that a standing assumption fails."""


@dataclass(frozen=True)
class NumericMode:
    """Arithmetic used by the engines: exact rationals, or floats with a tolerance."""

    exact: bool = True
    epsilon: float = 0  # an int keeps exact arithmetic rational

    def __post_init__(self):
        if not self.exact and not self.epsilon > 0:
            raise ValueError("float mode needs a positive epsilon")

    def convert(self, x) -> Number:
        return Fraction(x) if self.exact else float(x)

    @property
    def name(self) -> str:
        return "exact" if self.exact else "float"


EXACT = NumericMode()


def float_mode(epsilon: float = 1e-10) -> NumericMode:
    return NumericMode(exact=False, epsilon=epsilon)


def parse_number(token: str) -> Fraction:
    """Parse ``a/b`` or a decimal literal into an exact rational."""
    try:
        return Fraction(token.strip())
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {token!r}") from None


@dataclass(frozen=True)
class Action:
    label: str
    cost: int
    successors: tuple[tuple[int, Fraction], ...]


@dataclass(frozen=True)
class Mdp:
    """An MDP with integer action costs and an absorbing goal set.

    ``actions[s]`` lists the available actions of state ``s``; goal states carry
    a single zero-cost self-loop labelled ``loop``.
    """

    n_states: int
    actions: tuple[tuple[Action, ...], ...]
    initial: int
    goals: frozenset[int]
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @property
    def states(self) -> range:
        return range(self.n_states)

    @property
    def c_max(self) -> int:
        return max((a.cost for acts in self.actions for a in acts), default=0)

    @property
    def p_min(self) -> Fraction:
        return min(p for acts in self.actions for a in acts for _, p in a.successors if p > 0)

    @property
    def n_state_actions(self) -> int:
        return sum(len(acts) for acts in self.actions)

    def is_goal(self, s: int) -> bool:
        return s in self.goals

    @property
    def is_chain(self) -> bool:
        return all(len(acts) == 1 for acts in self.actions)

    @property
    def is_uniform(self) -> bool:
        """True when every non-goal action costs exactly 1."""
        return all(a.cost == 1 for s in self.states if s not in self.goals for a in self.actions[s])

    def action_index(self, s: int, label: str) -> int:
        for i, a in enumerate(self.actions[s]):
            if a.label == label:
                return i
        raise KeyError(f"state {s} has no action {label!r}")

    def transitions(self, mode: NumericMode = EXACT) -> tuple[tuple[tuple[tuple[int, Number], ...], ...], ...]:
        """Successor lists with probabilities converted to ``mode``'s number type."""
        key = ("transitions", mode.exact)
        if key not in self._cache:
            conv = mode.convert
            self._cache[key] = tuple(
                tuple(tuple((t, conv(p)) for t, p in a.successors) for a in acts) for acts in self.actions
            )
        return self._cache[key]


def make_mdp(
    n_states: int,
    actions: dict[int, Sequence[tuple[str, int, Iterable[tuple[int, object]]]]],
    initial: int,
    goals: Iterable[int],
) -> Mdp:
    """Build an :class:`Mdp` from plain data; goal self-loops are added automatically.

    ``actions`` maps a non-goal state to ``(label, cost, successors)`` triples whose
    successor probabilities may be anything :class:`~fractions.Fraction` accepts.
    """
    goals = frozenset(goals)
    table: list[tuple[Action, ...]] = []
    for s in range(n_states):
        if s in goals:
            if actions.get(s):
                raise ModelError(f"goal state {s} must not declare actions")
            table.append((Action(GOAL_LOOP_LABEL, 0, ((s, Fraction(1)),)),))
            continue
        acts = []
        for label, cost, succ in actions.get(s, ()):
            merged: dict[int, Fraction] = {}
            for t, p in succ:
                merged[t] = merged.get(t, Fraction(0)) + Fraction(p)
            acts.append(Action(str(label), int(cost), tuple(sorted((t, p) for t, p in merged.items() if p != 0))))
        table.append(tuple(acts))
    m = Mdp(n_states, tuple(table), initial, goals)
    check_structure(m)
    return m


def check_structure(m: Mdp, exact: bool = True) -> None:
    """Structural well-formedness: indices, probability rows, labels."""
    if m.n_states <= 0:
        raise ModelError("model has no states")
    if not 0 <= m.initial < m.n_states:
        raise ModelError(f"initial state {m.initial} out of range")
    for g in m.goals:
        if not 0 <= g < m.n_states:
            raise ModelError(f"goal state {g} out of range")
    for s, acts in enumerate(m.actions):
        seen = set()
        for a in acts:
            if a.label in seen:
                raise ModelError(f"duplicate action label {a.label!r} in state {s}")
            seen.add(a.label)
            if a.cost < 0:
                raise ModelError(f"negative cost on action {a.label!r} of state {s}")
            total = Fraction(0)
            for t, p in a.successors:
                if not 0 <= t < m.n_states:
                    raise ModelError(f"action {a.label!r} of state {s} references unknown state {t}")
                if p < 0:
                    raise ModelError(f"negative probability in action {a.label!r} of state {s}")
                total += p
            if total != 1 if exact else abs(float(total) - 1) > 1e-9:
                raise ModelError(f"probabilities sum to {_fmt(total)} in action {a.label!r} of state {s}")


def _fmt(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    f = float(x)
    return f"{f:g}" if Fraction(repr(f)) == x else str(x)


# --------------------------------------------------------------------------- text format

_KEYWORDS = ("mdp", "states", "initial", "goals", "action")
_SUCC = re.compile(r"^(\d+)\s*:\s*(\S+)$")


def parse_model(text: str, exact: bool = True) -> Mdp:
    """Parse the line-oriented model format.

    Probabilities are read as exact rationals. With ``exact=False`` successor rows
    only need to sum to 1 within 1e-9.
    """
    n_states = initial = None
    goals: list[int] = []
    header_seen = False
    decls: list[tuple[int, int, str, int, list[tuple[int, Fraction]], int]] = []
    current = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head in _KEYWORDS:
            current = None
        if head == "mdp":
            if header_seen or len(tokens) != 1:
                raise ModelError("unexpected 'mdp' header", lineno)
            header_seen = True
            continue
        if not header_seen:
            raise ModelError("model must start with 'mdp'", lineno)
        if head == "states":
            n_states = _int_arg(tokens, lineno)
        elif head == "initial":
            initial = _int_arg(tokens, lineno)
        elif head == "goals":
            if len(tokens) < 2:
                raise ModelError("'goals' needs at least one state", lineno)
            goals = [_to_int(tok, lineno) for tok in tokens[1:]]
        elif head == "action":
            if len(tokens) != 4:
                raise ModelError("expected 'action <state> <label> <cost>'", lineno)
            state = _to_int(tokens[1], lineno)
            cost = _to_int(tokens[3], lineno)
            current = (lineno, state, tokens[2], cost, [])
            decls.append(current)
        else:
            if current is None:
                raise ModelError(f"unexpected token {head!r}", lineno)
            for tok in tokens:
                match = _SUCC.match(tok)
                if not match:
                    raise ModelError(f"bad successor entry {tok!r}", lineno)
                try:
                    prob = parse_number(match.group(2))
                except ValueError as exc:
                    raise ModelError(str(exc), lineno) from None
                current[4].append((int(match.group(1)), prob))

    if not header_seen:
        raise ModelError("empty model")
    if n_states is None:
        raise ModelError("missing 'states' declaration")
    if initial is None:
        raise ModelError("missing 'initial' declaration")
    if not goals:
        raise ModelError("missing 'goals' declaration")

    goal_set = set(goals)
    by_state: dict[int, list] = {}
    for lineno, state, label, cost, succ in decls:
        if not 0 <= state < n_states:
            raise ModelError(f"action on unknown state {state}", lineno)
        if state in goal_set:
            raise ModelError(f"goal state {state} must not declare actions", lineno)
        if not succ:
            raise ModelError(f"action {label!r} has no successors", lineno)
        seen = {t for t, _ in succ}
        if len(seen) != len(succ):
            raise ModelError(f"duplicate successor in action {label!r}", lineno)
        for t, p in succ:
            if not 0 <= t < n_states:
                raise ModelError(f"dangling state reference {t}", lineno)
            if p <= 0:
                raise ModelError(f"non-positive probability {p} in action {label!r}", lineno)
        total = sum((p for _, p in succ), Fraction(0))
        if total != 1 if exact else abs(float(total) - 1) > 1e-9:
            raise ModelError(f"probabilities sum to {_fmt(total)}", lineno)
        labels = by_state.setdefault(state, [])
        if any(label == other for other, _, _ in labels):
            raise ModelError(f"duplicate action label {label!r} in state {state}", lineno)
        labels.append((label, cost, succ))
    if exact:
        return make_mdp(n_states, by_state, initial, goal_set)
    return _make_inexact(n_states, by_state, initial, goal_set)


def _make_inexact(n_states, by_state, initial, goals) -> Mdp:
    table = []
    for s in range(n_states):
        if s in goals:
            table.append((Action(GOAL_LOOP_LABEL, 0, ((s, Fraction(1)),)),))
        else:
            table.append(tuple(Action(l, c, tuple(sorted(succ))) for l, c, succ in by_state.get(s, ())))
    m = Mdp(n_states, tuple(table), initial, frozenset(goals))
    check_structure(m, exact=False)
    return m


def _int_arg(tokens: list[str], lineno: int) -> int:
    if len(tokens) != 2:
        raise ModelError(f"'{tokens[0]}' takes exactly one argument", lineno)
    return _to_int(tokens[1], lineno)


def _to_int(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ModelError(f"expected an integer, got {token!r}", lineno) from None


def serialize_model(m: Mdp) -> str:
    lines = ["mdp", f"states {m.n_states}", f"initial {m.initial}", "goals " + " ".join(map(str, sorted(m.goals)))]
    for s in m.states:
        if s in m.goals:
            continue
        for a in m.actions[s]:
            lines.append(f"action {s} {a.label} {a.cost}")
            lines.append("  " + " ".join(f"{t}:{p}" for t, p in a.successors))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- assumptions


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    states: tuple[int, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    proper_policy: tuple[int, ...] | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def summary(self) -> str:
        if self.ok:
            return "all assumptions hold"
        return "; ".join(f"{v.kind}: {v.message}" for v in self.violations)


def almost_sure_winning(m: Mdp) -> tuple[set[int], list[int]]:
    """States that reach the goal with probability 1 under some policy.

    Returns the winning set and, for every winning non-goal state, an action index
    that keeps the run inside the winning set while making progress towards the goal.
    Losing states get action index -1.
    """
    win = set(m.states)
    while True:
        allowed = {
            s: [i for i, a in enumerate(m.actions[s]) if all(t in win for t, _ in a.successors)]
            for s in win
            if s not in m.goals
        }
        reach = set(g for g in m.goals if g in win)
        choice = [-1] * m.n_states
        frontier = deque(reach)
        # backward BFS over allowed actions: an action counts once any successor is reached
        preds: dict[int, list[tuple[int, int]]] = {}
        for s, idxs in allowed.items():
            for i in idxs:
                for t, _ in m.actions[s][i].successors:
                    preds.setdefault(t, []).append((s, i))
        while frontier:
            t = frontier.popleft()
            for s, i in preds.get(t, ()):
                if s not in reach:
                    reach.add(s)
                    choice[s] = i
                    frontier.append(s)
        if reach == win:
            return win, choice
        win = reach


def validate_assumptions(m: Mdp) -> ValidationReport:
    violations = []
    for g in sorted(m.goals):
        acts = m.actions[g]
        if len(acts) != 1 or acts[0].cost != 0 or acts[0].successors != ((g, Fraction(1)),):
            violations.append(Violation("goal-absorbing", f"goal state {g} is not an absorbing zero-cost self-loop", (g,)))
    if m.initial in m.goals:
        violations.append(Violation("initial-goal", f"initial state {m.initial} is a goal state", (m.initial,)))
    no_action = [s for s in m.states if s not in m.goals and not m.actions[s]]
    if no_action:
        violations.append(Violation("no-action", f"non-goal states without actions: {no_action}", tuple(no_action)))
    zero = sorted({s for s in m.states if s not in m.goals for a in m.actions[s] if a.cost == 0})
    if zero:
        violations.append(Violation("zero-cost-iff-goal", f"non-goal states with zero-cost actions: {zero}", tuple(zero)))
    win, choice = almost_sure_winning(m)
    losing = sorted(set(m.states) - win)
    proper = None
    if losing:
        violations.append(
            Violation("proper-policy", f"goal not almost-surely reachable from states {losing}", tuple(losing))
        )
    else:
        proper = tuple(0 if s in m.goals else choice[s] for s in m.states)
    return ValidationReport(tuple(violations), proper)


def require_valid(m: Mdp) -> ValidationReport:
    report = validate_assumptions(m)
    if not report.ok:
        raise AssumptionError(report.summary())
    return report


# --------------------------------------------------------------------------- thresholds


@dataclass(frozen=True)
class ThresholdQuery:
    """Thresholds strictly inside (0, 1), sorted strictly descending."""

    thresholds: tuple[Fraction, ...]

    def __post_init__(self):
        if not self.thresholds:
            raise ValueError("at least one threshold is required")
        for t in self.thresholds:
            if not 0 < t < 1:
                raise ValueError(f"threshold {t} must satisfy 0 < t < 1")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly descending")

    @classmethod
    def of(cls, values: Iterable) -> "ThresholdQuery":
        # floats go through their shortest repr so 0.1 means 1/10
        ts = sorted({parse_number(v if isinstance(v, str) else repr(v)) if isinstance(v, (str, float)) else Fraction(v)
                     for v in values}, reverse=True)
        return cls(tuple(ts))

    @classmethod
    def parse(cls, text: str) -> "ThresholdQuery":
        return cls.of(tok for tok in text.split(",") if tok.strip())

    def __iter__(self):
        return iter(self.thresholds)

    def __len__(self):
        return len(self.thresholds)
