"""Exact rational linear programming over possible worlds.

The solver is a two-phase revised simplex on ``Fraction`` data. The basis
inverse is kept explicitly (the systems here have few rows and many columns),
pricing runs on integers after scaling by a common denominator, and Bland's
rule takes over whenever pivots stop making progress, so it cannot cycle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence, Union

from .grounding import format_set, sort_nodes
from .model import Interpretation, ProbabilityBound

DEFAULT_BUDGET = 20
VSTAR = "v*"


class LPError(ArithmeticError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


class BudgetExceeded(LPError):
    def __init__(self, size: int, budget: int):
        super().__init__(f"{size} tuples exceed the world budget of {budget}")
        self.size = size
        self.budget = budget


@dataclass
class Row:
    coefs: dict
    sense: str  # "=", "<=", ">="
    rhs: Fraction
    label: str = ""


@dataclass
class LinearProgram:
    variables: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    direction: str = "min"
    worlds: dict = field(default_factory=dict)  # variable -> frozenset of tuple ids

    def add_variable(self, key: Hashable, world: Optional[frozenset] = None) -> Hashable:
        self.variables.append(key)
        if world is not None:
            self.worlds[key] = world
        return key

    def add_row(self, coefs: Mapping, sense: str, rhs, label: str = "") -> None:
        if sense not in ("=", "<=", ">="):
            raise ValueError(f"bad sense {sense!r}")
        clean = {k: Fraction(v) for k, v in coefs.items() if v}
        self.rows.append(Row(clean, sense, Fraction(rhs), label))

    def copy(self) -> "LinearProgram":
        return LinearProgram(
            list(self.variables),
            [Row(dict(r.coefs), r.sense, r.rhs, r.label) for r in self.rows],
            dict(self.objective),
            self.direction,
            dict(self.worlds),
        )

    def pinned(self, coefs: Mapping, sense: str, rhs, label: str = "pin") -> "LinearProgram":
        lp = self.copy()
        lp.add_row(coefs, sense, rhs, label)
        return lp

    def dump(self) -> str:
        names = {}
        lines = [f"variables: {len(self.variables)}"]
        for i, v in enumerate(self.variables):
            names[v] = v if isinstance(v, str) else f"x{i}"
            if v in self.worlds:
                lines.append(f"  {names[v]} = {format_set(self.worlds[v])}")
            elif not isinstance(v, str):
                lines.append(f"  {names[v]} = {v!r}")

        def form(coefs):
            parts = []
            for v in self.variables:
                c = coefs.get(v)
                if not c:
                    continue
                sign = "-" if c < 0 else "+"
                mag = abs(c)
                term = names[v] if mag == 1 else f"{mag} {names[v]}"
                parts.append(f"{sign} {term}")
            if not parts:
                return "0"
            text = " ".join(parts)
            return text[2:] if text.startswith("+ ") else "-" + text[2:]

        for r in self.rows:
            label = f"{r.label}: " if r.label else ""
            lines.append(f"{label}{form(r.coefs)} {r.sense} {r.rhs}")
        if self.objective:
            lines.append(f"objective: {self.direction} {form(self.objective)}")
        return "\n".join(lines)


# ---------------------------------------------------------------- world LPs

def valid_worlds(nodes: Sequence, edges: Iterable) -> list:
    """All subsets of ``nodes`` containing no edge, by backtracking."""
    nodes = list(nodes)
    index = {n: i for i, n in enumerate(nodes)}
    closing = [[] for _ in nodes]  # edges whose last node (in order) is i
    for e in edges:
        if not set(e) <= set(index):
            continue
        mask = 0
        for n in e:
            mask |= 1 << index[n]
        closing[max(index[n] for n in e)].append(mask)
    out = []

    def rec(i, mask):
        if i == len(nodes):
            out.append(mask)
            return
        rec(i + 1, mask)
        with_i = mask | (1 << i)
        if all(e & with_i != e for e in closing[i]):
            rec(i + 1, with_i)

    rec(0, 0)
    return [frozenset(nodes[i] for i in range(len(nodes)) if m >> i & 1) for m in sorted(out)]


def build_world_system(marginals: Mapping[str, ProbabilityBound], edges: Iterable,
                       budget: int = DEFAULT_BUDGET) -> LinearProgram:
    """One variable per world that contains no edge, one marginal row per tuple
    (two rows for a range) and the total-mass row."""
    nodes = sort_nodes(marginals)
    if len(nodes) > budget:
        raise BudgetExceeded(len(nodes), budget)
    lp = LinearProgram()
    for w in valid_worlds(nodes, edges):
        lp.add_variable(w, w)
    for t in nodes:
        b = marginals[t]
        coefs = {w: 1 for w in lp.variables if t in w}
        if b.is_point:
            lp.add_row(coefs, "=", b.lo, f"marginal {t}")
        else:
            lp.add_row(coefs, ">=", b.lo, f"marginal {t} lo")
            lp.add_row(coefs, "<=", b.hi, f"marginal {t} hi")
    lp.add_row({w: 1 for w in lp.variables}, "=", 1, "mass")
    return lp


Event = Union[Callable[[frozenset], bool], Iterable]


def as_predicate(event: Event) -> Callable[[frozenset], bool]:
    if callable(event):
        return event
    required = frozenset(event)
    return lambda w: required <= w


def add_event_objective(lp: LinearProgram, event: Event) -> LinearProgram:
    """Add v* equal to the mass of worlds satisfying ``event`` and make it the
    objective. ``event`` is a world predicate or a set of tuples that must all
    be present."""
    pred = as_predicate(event)
    out = lp.copy()
    out.add_variable(VSTAR)
    coefs = {VSTAR: Fraction(1)}
    for v, w in lp.worlds.items():
        if pred(w):
            coefs[v] = Fraction(-1)
    out.add_row(coefs, "=", 0, "event")
    out.objective = {VSTAR: Fraction(1)}
    return out


def interpretation(lp: LinearProgram, point: Mapping) -> Interpretation:
    return Interpretation({lp.worlds[v]: x for v, x in point.items() if v in lp.worlds and x})


# ------------------------------------------------------------------- solver

class _Simplex:
    def __init__(self, lp: LinearProgram):
        self.n_struct = len(lp.variables)
        self.var_index = {v: j for j, v in enumerate(lp.variables)}
        cols = [([], []) for _ in lp.variables]
        b = []
        kinds = []  # per column: "x", "slack", "art"
        kinds.extend("x" for _ in lp.variables)
        basis = []
        for i, row in enumerate(lp.rows):
            sign = -1 if row.rhs < 0 else 1
            sense = row.sense
            if sign < 0 and sense != "=":
                sense = "<=" if sense == ">=" else ">="
            for v, c in row.coefs.items():
                j = self.var_index[v]
                cols[j][0].append(i)
                cols[j][1].append(c * sign)
            b.append(row.rhs * sign)
            if sense == "<=":
                cols.append(([i], [Fraction(1)]))
                kinds.append("slack")
                basis.append(len(cols) - 1)
            else:
                if sense == ">=":
                    cols.append(([i], [Fraction(-1)]))
                    kinds.append("slack")
                cols.append(([i], [Fraction(1)]))
                kinds.append("art")
                basis.append(len(cols) - 1)
        self.m = len(lp.rows)
        self.cols = cols
        self.kinds = kinds
        self.basis = basis
        self.x = list(b)
        one, zero = Fraction(1), Fraction(0)
        self.binv = [[one if i == k else zero for i in range(self.m)] for k in range(self.m)]
        # integer copies of the columns for pricing
        self.int_cols = []
        for rows, vals in cols:
            scale = lcm(*(v.denominator for v in vals)) if vals else 1
            self.int_cols.append((rows, [int(v * scale) for v in vals], scale))

    def _price(self, cost, allowed):
        m = self.m
        y = [Fraction(0)] * m
        for k, j in enumerate(self.basis):
            c = cost[j]
            if c:
                row = self.binv[k]
                for i in range(m):
                    if row[i]:
                        y[i] += c * row[i]
        den = lcm(*(v.denominator for v in y)) if m else 1
        Y = [int(v * den) for v in y]
        in_basis = set(self.basis)
        cands = []
        for j in allowed:
            if j in in_basis:
                continue
            rows, ints, scale = self.int_cols[j]
            c = cost[j]
            r = c.numerator * den * scale
            cd = c.denominator
            s = 0
            for i, a in zip(rows, ints):
                s += Y[i] * a
            r -= s * cd
            if r < 0:
                cands.append((j, r, scale * cd))
        return cands

    def _column(self, j):
        rows, vals = self.cols[j]
        u = []
        for k in range(self.m):
            row = self.binv[k]
            s = Fraction(0)
            for i, a in zip(rows, vals):
                if row[i]:
                    s += row[i] * a
            u.append(s)
        return u

    def _pivot(self, r, j, u):
        piv = u[r]
        rowr = [v / piv for v in self.binv[r]]
        self.binv[r] = rowr
        xr = self.x[r] / piv
        self.x[r] = xr
        for k in range(self.m):
            if k != r and u[k]:
                f = u[k]
                row = self.binv[k]
                self.binv[k] = [a - f * c if c else a for a, c in zip(row, rowr)]
                self.x[k] -= f * xr
        self.basis[r] = j

    def run(self, cost, allowed):
        allowed = list(allowed)
        stalled = 0
        while True:
            cands = self._price(cost, allowed)
            if not cands:
                return
            if stalled > 8:
                j = min(c[0] for c in cands)
            else:
                j = min(cands, key=_steepness)[0]
            u = self._column(j)
            best = None
            for k in range(self.m):
                if u[k] > 0:
                    ratio = self.x[k] / u[k]
                    key = (ratio, self.basis[k])
                    if best is None or key < best[0]:
                        best = (key, k)
            if best is None:
                raise Unbounded("objective is unbounded")
            stalled = stalled + 1 if best[0][0] == 0 else 0
            self._pivot(best[1], j, u)

    def objective_value(self, cost):
        return sum((cost[j] * self.x[k] for k, j in enumerate(self.basis)), Fraction(0))

    def phase1(self) -> bool:
        cost = [Fraction(1) if k == "art" else Fraction(0) for k in self.kinds]
        self.run(cost, range(len(self.cols)))
        if self.objective_value(cost) != 0:
            return False
        # drive zero-level artificials out of the basis where possible
        for r, j in enumerate(self.basis):
            if self.kinds[j] != "art":
                continue
            row = self.binv[r]
            for q, kind in enumerate(self.kinds):
                if kind == "art" or q in self.basis:
                    continue
                rows, vals = self.cols[q]
                if sum((row[i] * a for i, a in zip(rows, vals)), Fraction(0)) != 0:
                    self._pivot(r, q, self._column(q))
                    break
        self.allowed = [q for q, kind in enumerate(self.kinds) if kind != "art"]
        return True

    def phase2(self, objective: Mapping, direction: str) -> Fraction:
        sign = 1 if direction == "min" else -1
        cost = [Fraction(0)] * len(self.cols)
        for v, c in objective.items():
            cost[self.var_index[v]] = sign * Fraction(c)
        self.run(cost, self.allowed)
        return sign * self.objective_value(cost)

    def point(self) -> dict:
        vals = [Fraction(0)] * self.n_struct
        for k, j in enumerate(self.basis):
            if j < self.n_struct:
                vals[j] = self.x[k]
        return vals


def _steepness(cand):
    j, r, scale = cand
    try:
        return r / scale
    except OverflowError:
        return float(Fraction(r, scale))


def _point_dict(lp: LinearProgram, solver: _Simplex) -> dict:
    return dict(zip(lp.variables, solver.point()))


def solve_feasible(lp: LinearProgram) -> Optional[dict]:
    """A feasible point as a variable -> Fraction map, or None."""
    s = _Simplex(lp)
    if not s.phase1():
        return None
    return _point_dict(lp, s)


def optimize(lp: LinearProgram, direction: Optional[str] = None,
             objective: Optional[Mapping] = None) -> Fraction:
    value, _ = optimize_with_point(lp, direction, objective)
    return value


def optimize_with_point(lp: LinearProgram, direction: Optional[str] = None,
                        objective: Optional[Mapping] = None) -> tuple:
    direction = direction or lp.direction
    objective = lp.objective if objective is None else objective
    s = _Simplex(lp)
    if not s.phase1():
        raise Infeasible("the system has no solution")
    value = s.phase2(objective, direction)
    return value, _point_dict(lp, s)


def optimize_range(lp: LinearProgram, objective: Optional[Mapping] = None) -> tuple:
    """(min, max) of the objective, sharing one phase-1 run."""
    objective = lp.objective if objective is None else objective
    s = _Simplex(lp)
    if not s.phase1():
        raise Infeasible("the system has no solution")
    lo = s.phase2(objective, "min")
    hi = s.phase2(objective, "max")
    return lo, hi
