"""Linear programs over nonnegative variables and their textual export."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..model import Number

SENSES = ("<=", "=", ">=")
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class UnboundedLp(ArithmeticError):
    pass


@dataclass
class Constraint:
    coeffs: dict[int, Number]
    sense: str
    rhs: Number
    name: str = ""


@dataclass
class LpModel:
    """Minimize ``objective`` subject to ``constraints``; every variable is >= 0."""

    names: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, Number] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def var(self, name: str) -> int:
        """Index of ``name``, creating the variable on first use."""
        j = self.index.get(name)
        if j is None:
            j = self.index[name] = len(self.names)
            self.names.append(name)
        return j

    def add(self, coeffs: Mapping[int, Number], sense: str, rhs: Number, name: str = "") -> None:
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        for j in coeffs:
            if not 0 <= j < len(self.names):
                raise IndexError(f"constraint references unknown variable {j}")
        merged = {j: v for j, v in coeffs.items() if v}
        self.constraints.append(Constraint(merged, sense, rhs, name or f"c{len(self.constraints)}"))

    def minimize(self, coeffs: Mapping[int, Number]) -> None:
        for j in coeffs:
            if not 0 <= j < len(self.names):
                raise IndexError(f"objective references unknown variable {j}")
        self.objective = {j: v for j, v in coeffs.items() if v}

    def violation(self, values) -> Number:
        """Largest constraint or bound violation of an assignment (0 when feasible)."""
        worst = max((-v for v in values), default=0)
        worst = max(worst, 0)
        for c in self.constraints:
            lhs = sum(v * values[j] for j, v in c.coeffs.items())
            gap = lhs - c.rhs
            if c.sense == "<=":
                worst = max(worst, gap)
            elif c.sense == ">=":
                worst = max(worst, -gap)
            else:
                worst = max(worst, abs(gap))
        return worst

    def evaluate(self, values) -> Number:
        return sum(v * values[j] for j, v in self.objective.items())


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective: Number | None = None
    values: tuple = ()

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _num(x) -> str:
    f = float(x)
    return str(int(f)) if f == int(f) and abs(f) < 1e15 else format(f, ".17g")


def _terms(lp: LpModel, coeffs: Mapping[int, Number]) -> str:
    parts = []
    for j, v in sorted(coeffs.items()):
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1 else _num(mag) + " "
        parts.append(f"{sign} {coef}{lp.names[j]}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_format(lp: LpModel, title: str = "lp") -> str:
    """CPLEX LP text. Rational coefficients are written as 17-digit decimals."""
    lines = [f"\\ {title}", "Minimize", f" obj: {_terms(lp, lp.objective)}", "Subject To"]
    for c in lp.constraints:
        lines.append(f" {c.name}: {_terms(lp, c.coeffs)} {c.sense} {_num(c.rhs)}")
    lines.append("Bounds")
    lines.extend(f" {name} >= 0" for name in lp.names)
    lines.append("End")
    return "\n".join(lines) + "\n"
