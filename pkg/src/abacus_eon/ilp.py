"""Solver-neutral integer program representation and LP-format text I/O."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

LE, GE, EQ = "<=", ">=", "=="


class LinExpr:
    """Sparse linear expression ``sum(coef * var) + constant`` keyed by variable name."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Mapping[str, float] | None = None, constant: float = 0.0):
        self.terms: dict[str, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    def add_term(self, name: str, coef: float) -> "LinExpr":
        if coef:
            self.terms[name] = self.terms.get(name, 0.0) + coef
        return self

    def __iadd__(self, other: "LinExpr") -> "LinExpr":
        for name, coef in other.terms.items():
            self.add_term(name, coef)
        self.constant += other.constant
        return self

    def __add__(self, other: "LinExpr") -> "LinExpr":
        out = LinExpr(self.terms, self.constant)
        out += other
        return out

    def scaled(self, factor: float) -> "LinExpr":
        return LinExpr({n: c * factor for n, c in self.terms.items()}, self.constant * factor)

    def evaluate(self, assignment: Mapping[str, float]) -> float:
        total = self.constant
        for name, coef in self.terms.items():
            total += coef * assignment.get(name, 0.0)
        return total

    def __repr__(self) -> str:
        return f"LinExpr({len(self.terms)} terms, constant={self.constant:g})"


@dataclass
class Constraint:
    name: str
    terms: dict[str, float]
    sense: str
    rhs: float
    family: str = ""

    def activity(self, assignment: Mapping[str, float]) -> float:
        return sum(c * assignment.get(n, 0.0) for n, c in self.terms.items())

    def violation(self, assignment: Mapping[str, float]) -> float:
        lhs = self.activity(assignment)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class IlpModel:
    """Minimisation model over named binary (and optional continuous) variables."""

    name: str = "model"
    var_names: list[str] = field(default_factory=list)
    var_index: dict[str, int] = field(default_factory=dict)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    integer: list[bool] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    # problem-specific payload for structure-exploiting backends
    instance: object | None = None

    # -- variables
    def add_binary(self, name: str) -> str:
        return self._add_var(name, 0.0, 1.0, True)

    def add_continuous(self, name: str, lb: float = 0.0, ub: float = math.inf) -> str:
        return self._add_var(name, lb, ub, False)

    def _add_var(self, name: str, lb: float, ub: float, integer: bool) -> str:
        if name in self.var_index:
            raise ValueError(f"variable {name} declared twice")
        self.var_index[name] = len(self.var_names)
        self.var_names.append(name)
        self.lower.append(lb)
        self.upper.append(ub)
        self.integer.append(integer)
        return name

    def fix(self, name: str, value: float) -> None:
        i = self.var_index[name]
        self.lower[i] = self.upper[i] = float(value)

    def bounds(self, name: str) -> tuple[float, float]:
        i = self.var_index[name]
        return self.lower[i], self.upper[i]

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    # -- constraints
    def add_constraint(
        self, terms: Mapping[str, float] | LinExpr, sense: str, rhs: float, family: str = "", name: str | None = None
    ) -> Constraint:
        if isinstance(terms, LinExpr):
            rhs = rhs - terms.constant
            terms = terms.terms
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {sense!r}")
        for n, c in terms.items():
            if n not in self.var_index:
                raise KeyError(f"constraint references undeclared variable {n}")
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient on {n}")
        if not math.isfinite(rhs):
            raise ValueError("non-finite right-hand side")
        con = Constraint(name or f"c{len(self.constraints)}", dict(terms), sense, float(rhs), family)
        self.constraints.append(con)
        return con

    def family_counts(self) -> Counter:
        return Counter(c.family for c in self.constraints)

    # -- objective
    def set_objective(self, terms: Mapping[str, float]) -> None:
        for n, c in terms.items():
            if n not in self.var_index:
                raise KeyError(f"objective references undeclared variable {n}")
            if not math.isfinite(c):
                raise ValueError(f"non-finite objective coefficient on {n}")
        self.objective = {n: float(c) for n, c in terms.items() if c}

    def objective_value(self, assignment: Mapping[str, float]) -> float:
        return sum(c * assignment.get(n, 0.0) for n, c in self.objective.items())

    # -- verification
    def violations(self, assignment: Mapping[str, float], tol: float = 1e-6) -> list[str]:
        """Every bound, integrality and row violation above ``tol``."""
        out = []
        for i, name in enumerate(self.var_names):
            v = assignment.get(name, 0.0)
            if v < self.lower[i] - tol or v > self.upper[i] + tol:
                out.append(f"bound {name}={v} not in [{self.lower[i]}, {self.upper[i]}]")
            if self.integer[i] and abs(v - round(v)) > tol:
                out.append(f"integrality {name}={v}")
        for con in self.constraints:
            viol = con.violation(assignment)
            if viol > tol:
                out.append(f"{con.name} ({con.family}) violated by {viol:g}")
        return out


def check_assignment(model: IlpModel, assignment: Mapping[str, float], tol: float = 1e-6) -> bool:
    return not model.violations(assignment, tol)


# --------------------------------------------------------------------------
# LP format

_LP_LINE = 200


def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    return repr(float(x))


def _terms_lines(terms: Iterable[tuple[str, float]], lead: str) -> list[str]:
    lines, line = [], lead
    for name, coef in terms:
        tok = f" {'+' if coef >= 0 else '-'} {_fmt(abs(coef))} {name}"
        if len(line) + len(tok) > _LP_LINE:
            lines.append(line)
            line = "   "
        line += tok
    lines.append(line)
    return lines


def write_lp(model: IlpModel) -> str:
    """Render the model in CPLEX LP text format."""
    out = [f"\\ {model.name}", "Minimize"]
    obj = [(n, c) for n, c in model.objective.items()]
    out += _terms_lines(obj or [(model.var_names[0], 0.0)] if model.var_names else [], " obj:")
    out.append("Subject To")
    op = {LE: "<=", GE: ">=", EQ: "="}
    for con in model.constraints:
        if not con.terms:
            continue
        lines = _terms_lines(con.terms.items(), f" {con.name}:")
        lines[-1] += f" {op[con.sense]} {_fmt(con.rhs)}"
        out += lines
    out.append("Bounds")
    for i, name in enumerate(model.var_names):
        lb, ub = model.lower[i], model.upper[i]
        lo = "-inf" if lb == -math.inf else _fmt(lb)
        hi = "+inf" if ub == math.inf else _fmt(ub)
        out.append(f" {lo} <= {name} <= {hi}")
    ints = [n for i, n in enumerate(model.var_names) if model.integer[i]]
    if ints:
        # bounds already restrict to [0,1]; General keeps fixed bounds intact
        out.append("General")
        for k in range(0, len(ints), 8):
            out.append(" " + " ".join(ints[k : k + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


_SOL_LINE = re.compile(r"^\s*([A-Za-z_][\w.\[\]]*)\s+([-+0-9.eEinfINF]+)\s*$")


def parse_solution(text: str, names: Iterable[str]) -> dict[str, float]:
    """Read ``name value`` pairs from a solution file.

    Header and section lines are skipped; only names known to the model are
    kept, so column listings of most solvers parse unchanged. When a name
    appears in several sections (e.g. HiGHS writes primal then dual values),
    the first occurrence wins.
    """
    wanted = set(names)
    values: dict[str, float] = {}
    for line in text.splitlines():
        if line.lower().startswith("# dual"):
            break
        m = _SOL_LINE.match(line)
        if not m or m.group(1) not in wanted or m.group(1) in values:
            continue
        try:
            values[m.group(1)] = float(m.group(2))
        except ValueError:
            continue
    return values
