"""Benchmark and adversarial model generators."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from .model import Mdp, ModelError, make_mdp, validate_assumptions

HALF = Fraction(1, 2)


class _Builder:
    """Allocates state indices on first use and collects actions."""

    def __init__(self):
        self.index: dict[object, int] = {}
        self.actions: dict[int, list] = {}

    def state(self, key) -> int:
        if key not in self.index:
            self.index[key] = len(self.index)
        return self.index[key]

    def action(self, key, label: str, cost: int, succ: list[tuple[object, Fraction]]) -> None:
        s = self.state(key)
        self.actions.setdefault(s, []).append((label, cost, [(self.state(k), p) for k, p in succ]))

    def build(self, initial, goals) -> Mdp:
        init = self.state(initial)
        goal_ids = [self.state(g) for g in goals]
        return make_mdp(len(self.index), self.actions, init, goal_ids)


def geometric_chain() -> Mdp:
    """Initial state loops with probability 1/2 and reaches the goal with 1/2, cost 1."""
    return make_mdp(2, {0: [("go", 1, [(0, HALF), (1, HALF)])]}, 0, [1])


def deterministic_chain(k: int) -> Mdp:
    """``k`` unit-cost steps from state 0 to the goal (state ``k``)."""
    if k < 1:
        raise ModelError("chain length must be at least 1")
    return make_mdp(k + 1, {s: [("go", 1, [(s + 1, 1)])] for s in range(k)}, 0, [k])


def gen_fig4(k: int) -> Mdp:
    """Two choices from ``s0``: action ``a`` walks a deterministic k-state chain to the
    goal; action ``b`` reaches ``s_b`` (one hop from the goal) with probability 0.9 and
    otherwise enters a 2k-state chain."""
    if k < 1:
        raise ModelError("fig4 needs k >= 1")
    b = _Builder()
    b.state("s0")
    b.state("goal")
    b.action("s0", "a", 1, [(("a", 1), Fraction(1))])
    for i in range(1, k + 1):
        b.action(("a", i), "go", 1, [(("a", i + 1) if i < k else "goal", Fraction(1))])
    b.action("s0", "b", 1, [("sb", Fraction(9, 10)), (("b", 1), Fraction(1, 10))])
    b.action("sb", "go", 1, [("goal", Fraction(1))])
    for i in range(1, 2 * k + 1):
        b.action(("b", i), "go", 1, [(("b", i + 1) if i < 2 * k else "goal", Fraction(1))])
    return b.build("s0", ["goal"])


def _fig2_upper(b: _Builder, n: int, p: Fraction, exit_key) -> None:
    # s_i moves on with probability p, otherwise drops into the restart chain r_{i+1}..r_n
    for i in range(n):
        fwd = ("s", i + 1)
        b.action(("s", i), "go", 1, [(fwd, p), (("r", i + 1), 1 - p)])
    for i in range(1, n + 1):
        b.action(("r", i), "go", 1, [(("r", i + 1) if i < n else ("s", 0), Fraction(1))])
    b.action(("s", n), "go", 1, [(exit_key, Fraction(1))])


def gen_fig2_chain(n: int, p=HALF) -> Mdp:
    """The upper cycle of the exponential-memory example as a Markov chain whose goal
    is ``d``; after every n+1 steps a fraction p^n of the runs has arrived."""
    p = Fraction(p)
    if n < 1 or not 0 < p < 1:
        raise ModelError("fig2 chain needs n >= 1 and 0 < p < 1")
    b = _Builder()
    b.state(("s", 0))
    _fig2_upper(b, n, p, "d")
    return b.build(("s", 0), ["d"])


def gen_fig2(n: int, k: int, p=HALF) -> Mdp:
    """The exponential-memory example: the upper cycle feeds ``d``, where action ``a``
    enters a deterministic (k+2)-state chain and action ``b`` splits evenly between a
    single state ``d_1`` and a (2k+1)-state chain, all ending in the goal."""
    p = Fraction(p)
    if k < 1 or n <= 2 * k + 1:
        raise ModelError("fig2 needs k >= 1 and n > 2k + 1")
    if not 0 < p < 1:
        raise ModelError("fig2 needs 0 < p < 1")
    b = _Builder()
    b.state(("s", 0))
    _fig2_upper(b, n, p, "d")
    b.action("d", "a", 1, [(("a", 1), Fraction(1))])
    for i in range(1, k + 3):
        b.action(("a", i), "go", 1, [(("a", i + 1) if i < k + 2 else "goal", Fraction(1))])
    b.action("d", "b", 1, [("d1", HALF), (("b", 1), HALF)])
    b.action("d1", "go", 1, [("goal", Fraction(1))])
    for i in range(1, 2 * k + 2):
        b.action(("b", i), "go", 1, [(("b", i + 1) if i < 2 * k + 1 else "goal", Fraction(1))])
    return b.build(("s", 0), ["goal"])


# --------------------------------------------------------------------------- Walk


@dataclass(frozen=True)
class WalkSpec:
    n: int
    forward: Fraction = HALF
    gamble_fail: Fraction = Fraction(1, 10)
    max_fails: int = 3

    def __post_init__(self):
        if self.n < 2:
            raise ModelError("walk length n must be at least 2")
        if not 0 < self.forward <= 1 or not 0 <= self.gamble_fail < 1:
            raise ModelError("walk probabilities out of range")


def gen_walk(spec: WalkSpec | int) -> Mdp:
    """Line walk: step forward (succeeds with ``forward``, else stay) or gamble to
    double the position (fails with ``gamble_fail``, halving it and counting a fail).
    Gambling is disabled after ``max_fails`` fails. Position ``n`` is the goal."""
    if isinstance(spec, int):
        spec = WalkSpec(spec)
    n = spec.n
    b = _Builder()

    def key(pos, fails):
        return "goal" if pos >= n else (pos, fails)

    start = (0, 0)
    b.state(start)
    b.state("goal")
    queue, seen = deque([start]), {start}

    def visit(k):
        if k != "goal" and k not in seen:
            seen.add(k)
            queue.append(k)

    while queue:
        pos, fails = queue.popleft()
        fwd = [(key(pos + 1, fails), spec.forward)]
        if spec.forward < 1:
            fwd.append(((pos, fails), 1 - spec.forward))
        b.action((pos, fails), "forward", 1, fwd)
        for k, _ in fwd:
            visit(k)
        if fails < spec.max_fails:
            if pos == 0:
                succ = [((pos, fails), Fraction(1))]
            else:
                succ = [(key(min(2 * pos, n), fails), 1 - spec.gamble_fail)]
                if spec.gamble_fail > 0:
                    succ.append((key(pos // 2, fails + 1), spec.gamble_fail))
            b.action((pos, fails), "gamble", 1, succ)
            for k, _ in succ:
                visit(k)
    return b.build(start, ["goal"])


# --------------------------------------------------------------------------- Grid

DIRS = ((0, 1), (1, 0), (0, -1), (-1, 0))  # N, E, S, W
DIR_NAMES = "NESW"


@dataclass(frozen=True)
class GridSpec:
    """Robot-and-janitor grid world.

    The janitor lives in the 4x4 block of columns ``janitor_x .. janitor_x+3`` (full
    height 4), which the robot has to cross. Each step it moves forward with
    ``p_forward`` and turns left/right with ``p_turn`` each; the remainder keeps it in
    place. A blocked forward move becomes an even left/right turn.
    """

    width: int = 4
    height: int = 4
    obstacles: frozenset = frozenset({(1, 1), (3, 2)})
    start: tuple[int, int] = (0, 0)
    charger: tuple[int, int] | None = None
    janitor_x: int | None = None
    janitor_start: tuple[int, int] = (2, 1)
    janitor_facing: int = 0
    p_forward: Fraction = HALF
    p_turn: Fraction = Fraction(1, 4)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", frozenset(tuple(o) for o in self.obstacles))
        if self.charger is None:
            object.__setattr__(self, "charger", (self.width - 1, self.height - 1))
        if self.janitor_x is None:
            object.__setattr__(self, "janitor_x", (self.width - 4) // 2)
        self.check()

    def in_grid(self, c) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def in_region(self, c) -> bool:
        return self.janitor_x <= c[0] < self.janitor_x + 4 and 0 <= c[1] < 4 and self.in_grid(c)

    def free(self, c) -> bool:
        return self.in_grid(c) and c not in self.obstacles

    def check(self) -> None:
        if self.height != 4:
            raise ModelError("grid height must be 4 so the janitor block spans it")
        if self.width < 4:
            raise ModelError("grid width must be at least 4")
        if not 0 <= self.janitor_x <= self.width - 4:
            raise ModelError("janitor region must lie within the grid")
        for name in ("start", "charger"):
            if not self.in_grid(getattr(self, name)):
                raise ModelError(f"{name} outside the grid")
            if getattr(self, name) in self.obstacles:
                raise ModelError(f"{name} is an obstacle")
        if self.start == self.charger:
            raise ModelError("charger must differ from the robot start")
        if not self.in_region(self.janitor_start) or self.janitor_start in self.obstacles:
            raise ModelError("janitor must start on a free cell of its region")
        if not 0 <= self.janitor_facing < 4:
            raise ModelError("janitor facing must be 0..3 (N, E, S, W)")
        if self.p_forward < 0 or self.p_turn < 0 or self.p_forward + 2 * self.p_turn > 1:
            raise ModelError("janitor probabilities out of range")


def _janitor_moves(spec: GridSpec, cell, facing) -> list[tuple[tuple, int, Fraction]]:
    out: dict[tuple, Fraction] = {}

    def add(c, f, p):
        if p:
            out[(c, f)] = out.get((c, f), 0) + p

    dx, dy = DIRS[facing]
    ahead = (cell[0] + dx, cell[1] + dy)
    left, right = (facing - 1) % 4, (facing + 1) % 4
    if spec.in_region(ahead) and ahead not in spec.obstacles:
        add(ahead, facing, spec.p_forward)
    else:
        add(cell, left, spec.p_forward / 2)
        add(cell, right, spec.p_forward / 2)
    add(cell, left, spec.p_turn)
    add(cell, right, spec.p_turn)
    add(cell, facing, 1 - spec.p_forward - 2 * spec.p_turn)
    return [(c, f, p) for (c, f), p in out.items()]


def gen_grid(spec: GridSpec | None = None) -> Mdp:
    """Robot must reach the charger; moves are forbidden while the janitor is within
    Chebyshev distance 1. Every robot action (four moves, wait) costs 1."""
    spec = spec or GridSpec()
    b = _Builder()
    start = (spec.start, spec.janitor_start, spec.janitor_facing)
    b.state(start)
    b.state("goal")
    queue, seen = deque([start]), {start}
    while queue:
        robot, jan, facing = state = queue.popleft()
        jmoves = _janitor_moves(spec, jan, facing)
        near = max(abs(robot[0] - jan[0]), abs(robot[1] - jan[1])) <= 1
        options = [("wait", robot)]
        if not near:
            for name, (dx, dy) in zip(DIR_NAMES, DIRS):
                target = (robot[0] + dx, robot[1] + dy)
                if spec.free(target):
                    options.append((name, target))
        for label, target in options:
            succ = []
            for jc, jf, p in jmoves:
                k = "goal" if target == spec.charger else (target, jc, jf)
                succ.append((k, p))
                if k != "goal" and k not in seen:
                    seen.add(k)
                    queue.append(k)
            b.action(state, label, 1, succ)
    return b.build(start, ["goal"])


# --------------------------------------------------------------------------- random models


def random_mdp(
    rng: random.Random,
    max_states: int = 6,
    max_actions: int = 3,
    costs: tuple[int, ...] = (1, 2),
    denominators: tuple[int, ...] = (2, 3, 4, 5),
    max_successors: int = 3,
    min_states: int = 2,
) -> Mdp:
    """A random model satisfying all standing assumptions (resampled until valid).

    State ``n-1`` is the goal; every non-goal state gets at least one action with a
    positive-probability edge to a lower-ranked state or the goal, so a proper policy
    always exists.
    """
    while True:
        n = rng.randint(min_states, max_states)
        goal = n - 1
        acts: dict[int, list] = {}
        for s in range(n - 1):
            k = rng.randint(1, max_actions)
            lst = []
            for a in range(k):
                width = rng.randint(1, min(max_successors, n))
                targets = rng.sample(range(n), width)
                if a == 0 and not any(t == goal or t < s for t in targets):
                    targets[0] = goal if s == 0 or rng.random() < 0.5 else rng.randrange(s)
                    targets = list(dict.fromkeys(targets))
                probs = _random_split(rng, len(targets), rng.choice(denominators))
                lst.append((f"a{a}", rng.choice(costs), list(zip(targets, probs))))
            acts[s] = lst
        m = make_mdp(n, acts, 0, [goal])
        if validate_assumptions(m).ok:
            return m


def _random_split(rng: random.Random, k: int, denom: int) -> list[Fraction]:
    denom = max(denom, k)
    cuts = sorted(rng.sample(range(1, denom), k - 1)) if k > 1 else []
    bounds = [0, *cuts, denom]
    return [Fraction(bounds[i + 1] - bounds[i], denom) for i in range(k)]


def random_chain(rng: random.Random, **kwargs) -> Mdp:
    kwargs.setdefault("costs", (1,))
    return random_mdp(rng, max_actions=1, **kwargs)
