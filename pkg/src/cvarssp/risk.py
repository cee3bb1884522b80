"""Value-at-risk and conditional value-at-risk of finite cost distributions."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping

from .model import Number


@dataclass(frozen=True)
class RiskResult:
    var: int
    cvar: Number

    def __post_init__(self):
        if self.cvar < self.var - 1e-9:
            raise ValueError(f"cvar {self.cvar} below var {self.var}")


class CostDistribution(Mapping[int, Number]):
    """Finite-support distribution over nonnegative integer costs.

    Probabilities are kept exactly as given; a Fraction-valued distribution must sum
    to exactly 1, a float-valued one to within ``tol``.
    """

    def __init__(self, mass: Mapping[int, Number], tol: float = 1e-9):
        items = {}
        for x, p in mass.items():
            if int(x) != x or x < 0:
                raise ValueError(f"support point {x} is not a nonnegative integer")
            if p < 0:
                raise ValueError(f"negative probability at {x}")
            if p > 0:
                items[int(x)] = items.get(int(x), 0) + p
        if not items:
            raise ValueError("empty distribution")
        total = sum(items.values())
        exact = all(isinstance(p, (int, Fraction)) for p in items.values())
        if (total != 1) if exact else abs(total - 1) > tol:
            raise ValueError(f"distribution mass sums to {total}")
        self._mass = dict(sorted(items.items()))

    def __getitem__(self, x: int) -> Number:
        return self._mass[x]

    def __iter__(self) -> Iterator[int]:
        return iter(self._mass)

    def __len__(self) -> int:
        return len(self._mass)

    def __repr__(self):
        return f"CostDistribution({self._mass!r})"

    def mean(self) -> Number:
        return sum(x * p for x, p in self._mass.items())

    def worst_case(self) -> int:
        """Maximum support point, the limit of CVaR as the threshold goes to 0."""
        return max(self._mass)

    def tail(self, v: int) -> Number:
        """P[X > v]."""
        return sum(p for x, p in self._mass.items() if x > v)


def _as_dist(d) -> CostDistribution:
    return d if isinstance(d, CostDistribution) else CostDistribution(d)


def _check_threshold(t) -> None:
    if not 0 < t <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {t}")


def var(d: Mapping[int, Number], t: Number) -> int:
    """Smallest v with P[X > v] <= t; the minimum support point when t = 1."""
    d = _as_dist(d)
    _check_threshold(t)
    xs = list(d)
    if t == 1:
        return xs[0]
    # suffix sums from the top keep float rounding out of the tail masses
    tail = 0
    tails = []
    for x in reversed(xs):
        tails.append(tail)
        tail += d[x]
    for x, above in zip(xs, reversed(tails)):
        if above <= t:
            return x
    return xs[-1]


def cvar(d: Mapping[int, Number], t: Number) -> Number:
    d = _as_dist(d)
    _check_threshold(t)
    v = var(d, t)
    above = [(x, p) for x, p in d.items() if x > v]
    tail_mass = sum(p for _, p in above)
    tail_sum = sum(x * p for x, p in above)
    return (tail_sum + (t - tail_mass) * v) / t


def risk(d: Mapping[int, Number], t: Number) -> RiskResult:
    return RiskResult(var(d, t), cvar(d, t))


def worst_case(d: Mapping[int, Number]) -> int:
    return _as_dist(d).worst_case()
