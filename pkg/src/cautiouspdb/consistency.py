"""Consistency of tuple probabilities with denial constraints.

Each connected component of the conflict hypergraph is decided by the most
specific rule that applies; the world LP settles everything else. Ranges are
judged by their lower ends, since raising a probability can only hurt.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil
from typing import Mapping, Optional, Sequence

from .constraint_lang import (
    Const,
    DenialConstraint,
    SetClass,
    Tag,
    Var,
    classify,
    classify_set,
    merged_fds,
)
from .exact_lp import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    build_world_system,
    interpretation,
    solve_feasible,
)
from .grounding import (
    ConflictHypergraph,
    build_conflict_hypergraph,
    format_set,
    ground_constraint,
    minimize,
    reduce_probabilistic_constraints,
    sort_edges,
    sort_nodes,
)
from .hypergraph_analysis import Shape, classify_component, components, multipartite_partition
from .model import Interpretation, PDBInstance, ProbabilityBound, natural_key


class Outcome(str, enum.Enum):
    CONSISTENT = "Consistent"
    INCONSISTENT = "Inconsistent"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Condition:
    """A single inequality ``lhs <= rhs`` checked by a rule."""
    label: str
    lhs: Optional[Fraction]
    rhs: Optional[Fraction]
    holds: bool
    nodes: frozenset = frozenset()

    def __str__(self):
        if self.lhs is None:
            return f"{self.label}: {'feasible' if self.holds else 'infeasible'}"
        rel = "<=" if self.holds else ">"
        return f"{self.label}: {self.lhs} {rel} {self.rhs}"


def _leq(label, lhs, rhs, nodes=()) -> Condition:
    return Condition(label, Fraction(lhs), Fraction(rhs), lhs <= rhs, frozenset(nodes))


@dataclass
class RuleResult:
    rule: str
    conditions: list = field(default_factory=list)
    certificate: Optional[Interpretation] = None
    feasible: Optional[bool] = None  # set by rules without explicit inequalities

    @property
    def consistent(self) -> bool:
        if self.feasible is not None:
            return self.feasible
        return all(c.holds for c in self.conditions)

    @property
    def violated(self) -> Optional[Condition]:
        return next((c for c in self.conditions if not c.holds), None)


@dataclass
class ComponentReport:
    component_id: int
    nodes: tuple
    shape: str
    rule: str
    outcome: Outcome
    conditions: list = field(default_factory=list)
    certificate: Optional[Interpretation] = None
    reason: str = ""

    @property
    def violated(self) -> Optional[Condition]:
        return next((c for c in self.conditions if not c.holds), None)

    def describe(self) -> str:
        head = f"component {self.component_id} {format_set(self.nodes)} {self.shape}: {self.rule} rule -> {self.outcome.value}"
        if self.reason:
            head += f" ({self.reason})"
        return head


@dataclass
class Verdict:
    outcome: Outcome
    reports: list
    reason: str = ""

    @property
    def consistent(self) -> bool:
        return self.outcome == Outcome.CONSISTENT

    @property
    def violated(self) -> Optional[Condition]:
        for r in self.reports:
            if r.outcome == Outcome.INCONSISTENT:
                return r.violated
        return None

    def report_for(self, node) -> ComponentReport:
        return next(r for r in self.reports if node in r.nodes)

    def summary(self) -> str:
        if self.outcome == Outcome.INCONSISTENT:
            bad = next(r for r in self.reports if r.outcome == Outcome.INCONSISTENT)
            cond = bad.violated
            what = str(cond) if cond else "the world system is infeasible"
            return f"Inconsistent: {bad.rule} rule on component {bad.component_id}, {what}"
        if self.outcome == Outcome.UNKNOWN:
            return f"Unknown: {self.reason}"
        return "Consistent"


def _lo(marginals: Mapping, t) -> Fraction:
    return marginals[t].lo


def _marg(component: ConflictHypergraph, marginals) -> Mapping:
    return component.marginals if marginals is None else marginals


# ----------------------------------------------------------- structure rules

def check_hypertree_rule(component: ConflictHypergraph, marginals=None) -> RuleResult:
    """Every edge must leave room for one of its tuples to be missing."""
    m = _marg(component, marginals)
    conds = [
        _leq(f"edge {format_set(e)}", sum(_lo(m, t) for t in e), len(e) - 1, e)
        for e in component.edges
    ]
    return RuleResult("hypertree", conds)


def check_ring_rule(component: ConflictHypergraph, marginals=None) -> RuleResult:
    m = _marg(component, marginals)
    result = check_hypertree_rule(component, m)
    result.rule = "ring"
    nodes = set().union(*component.edges) | set(component.nodes)
    total = sum(_lo(m, t) for t in nodes) - len(nodes) + ceil(Fraction(len(component.edges), 2))
    result.conditions.append(_leq("ring total", total, 0, nodes))
    return result


def check_clique_rule(component: ConflictHypergraph, marginals=None) -> RuleResult:
    m = _marg(component, marginals)
    nodes = component.nodes
    return RuleResult("clique", [_leq(f"clique {format_set(nodes)}", sum(_lo(m, t) for t in nodes), 1, nodes)])


def check_singleton_rule(component: ConflictHypergraph, marginals=None) -> RuleResult:
    """A lone tuple is fine unless it violates a constraint on its own."""
    m = _marg(component, marginals)
    conds = [_leq(f"edge {format_set(e)}", sum(_lo(m, t) for t in e), 0, e) for e in component.edges]
    return RuleResult("singleton", conds)


def oracle_consistency(component: ConflictHypergraph, marginals=None,
                       budget: int = DEFAULT_BUDGET) -> RuleResult:
    """Feasibility of the world system; a model certificate when feasible.

    Raises BudgetExceeded for components above the budget.
    """
    m = _marg(component, marginals)
    lp = build_world_system({t: m[t] for t in component.nodes}, component.edges, budget)
    point = solve_feasible(lp)
    if point is None:
        return RuleResult("lp", [Condition("world system", None, None, False, frozenset(component.nodes))],
                          feasible=False)
    return RuleResult("lp", [Condition("world system", None, None, True, frozenset(component.nodes))],
                      certificate=interpretation(lp, point), feasible=True)


def pmin_lower_bound(tuples, marginals: Mapping) -> Fraction:
    """max{0, sum p - |T| + 1}: the least probability that all of T co-occur
    when nothing else is known."""
    tuples = list(tuples)
    return max(Fraction(0), sum((marginals[t].lo for t in tuples), Fraction(0)) - len(tuples) + 1)


# ----------------------------------------------------------- syntactic rules

def check_joinfree_rule(instance: PDBInstance, ic: DenialConstraint) -> RuleResult:
    """Edge inequalities on the constraint's own conflicting sets, whatever
    their shape."""
    m = instance.marginals()
    edges = sort_edges(minimize(ground_constraint(instance, ic)))
    conds = [_leq(f"edge {format_set(e)}", sum(_lo(m, t) for t in e), len(e) - 1, e) for e in edges]
    return RuleResult("join-free", conds)


def _plain_atom(atom) -> bool:
    vs = [t for t in atom.terms if isinstance(t, Var)]
    return len(vs) == len(atom.terms) and len(set(vs)) == len(vs)


def check_begd_rule(instance: PDBInstance, ic: DenialConstraint) -> Optional[RuleResult]:
    """Case analysis for ``R1(x, y1), R2(x, y2), u != v``.

    Applies when both atoms carry distinct variables only, the single builtin
    compares two variables and, over one relation, the shared variables sit
    at the same positions. Returns None for other shapes.
    """
    if ic.arity != 2 or len(ic.builtins) != 1:
        return None
    b = ic.builtins[0]
    a1, a2 = ic.atoms
    if b.op != "!=" or not (isinstance(b.left, Var) and isinstance(b.right, Var)):
        return None
    if not (_plain_atom(a1) and _plain_atom(a2)):
        return None
    pos = [{v: i for i, v in enumerate(a.terms)} for a in (a1, a2)]
    shared = sorted(set(pos[0]) & set(pos[1]), key=lambda v: v.name)
    same_rel = a1.relation == a2.relation
    if same_rel and any(pos[0][v] != pos[1][v] for v in shared):
        return None
    u, v = b.left, b.right
    m = instance.marginals()

    def key(t, side):
        return tuple(t.values[pos[side][x]] for x in shared)

    def val(t, side, var):
        return t.values[pos[side][var]]

    rel_tuples = [instance.relation(a1.relation), instance.relation(a2.relation)]
    conds = []

    # u and v inside one atom: that atom's tuples with u != v are the bad ones
    home = None
    if u in pos[0] and v in pos[0]:
        home = 0
    elif u in pos[1] and v in pos[1]:
        home = 1
    if home is not None:
        other = 1 - home
        bad = [t for t in rel_tuples[home] if val(t, home, u) != val(t, home, v)]
        if same_rel:
            for t in bad:
                conds.append(_leq(f"edge {{{t.tuple_id}}}", m[t.tuple_id].lo, 0, {t.tuple_id}))
            return RuleResult("begd", conds)
        groups = {}
        for t in bad:
            groups.setdefault(key(t, home), [[], []])[0].append(t)
        for t in rel_tuples[other]:
            if key(t, other) in groups:
                groups[key(t, other)][1].append(t)
        for k in sorted(groups, key=repr):
            left, right = groups[k]
            if not left or not right:
                continue
            best_l = max(left, key=lambda t: m[t.tuple_id].lo)
            best_r = max(right, key=lambda t: m[t.tuple_id].lo)
            conds.append(_leq(
                f"group {k}: {best_l.tuple_id} + {best_r.tuple_id}",
                m[best_l.tuple_id].lo + m[best_r.tuple_id].lo, 1,
                {t.tuple_id for t in left + right},
            ))
        return RuleResult("begd", conds)

    # u only in one atom and v only in the other
    if u in pos[1]:
        u, v = v, u
    if not (u in pos[0] and v in pos[1]):
        return None
    if same_rel:
        groups = {}
        for t in rel_tuples[0]:
            c1, c2 = val(t, 0, u), val(t, 1, v)
            if c1 != c2:
                conds.append(_leq(f"edge {{{t.tuple_id}}}", m[t.tuple_id].lo, 0, {t.tuple_id}))
                continue
            groups.setdefault(key(t, 0), {}).setdefault(c1, []).append(t)
        for k in sorted(groups, key=repr):
            buckets = groups[k]
            if len(buckets) < 2:
                continue
            reps = [max(ts, key=lambda t: m[t.tuple_id].lo) for _, ts in sorted(buckets.items(), key=lambda kv: repr(kv[0]))]
            conds.append(_leq(
                f"group {k}: " + " + ".join(f"max{format_set(t.tuple_id for t in ts)}" for _, ts in sorted(buckets.items(), key=lambda kv: repr(kv[0]))),
                sum(m[t.tuple_id].lo for t in reps), 1,
                {t.tuple_id for ts in buckets.values() for t in ts},
            ))
        # tuples carrying a self-conflict come first in the report
        conds.sort(key=lambda c: not c.label.startswith("edge"))
        return RuleResult("begd", conds)

    groups = {}
    for side, var in ((0, u), (1, v)):
        for t in rel_tuples[side]:
            groups.setdefault(key(t, side), ({}, {}))[side].setdefault(val(t, side, var), []).append(t)
    for k in sorted(groups, key=repr):
        left, right = groups[k]
        for c1 in sorted(left, key=repr):
            for c2 in sorted(right, key=repr):
                if c1 == c2:
                    continue
                b1 = max(left[c1], key=lambda t: m[t.tuple_id].lo)
                b2 = max(right[c2], key=lambda t: m[t.tuple_id].lo)
                conds.append(_leq(
                    f"group {k}: {b1.tuple_id} + {b2.tuple_id}",
                    m[b1.tuple_id].lo + m[b2.tuple_id].lo, 1,
                    {t.tuple_id for t in left[c1] + right[c2]},
                ))
    return RuleResult("begd", conds)


def check_fd_rule(instance: PDBInstance, ics: Sequence[DenialConstraint],
                  hypergraph: Optional[ConflictHypergraph] = None) -> list:
    """Per component: the maxima of the independent parts sum to at most 1.

    Returns one RuleResult per component, in component order.
    """
    if merged_fds(ics) is None:
        raise ValueError("the FD rule needs at most one FD left-hand side per relation")
    h = hypergraph or build_conflict_hypergraph(instance, ics)
    out = []
    for comp in components(h):
        m = comp.marginals
        if comp.edges:
            parts = multipartite_partition(comp)
            if parts is None:
                raise AssertionError(f"component {format_set(comp.nodes)} is not complete multipartite")
        else:
            parts = [frozenset([n]) for n in comp.nodes]
        total = sum(max(_lo(m, t) for t in p) for p in parts)
        label = " + ".join(f"max{format_set(p)}" if len(p) > 1 else f"p({next(iter(p))})" for p in parts)
        out.append(RuleResult("fd", [_leq(label, total, 1, comp.nodes)]))
    return out


# ------------------------------------------------------------------ dispatch

def check_component(comp: ConflictHypergraph, budget: int = DEFAULT_BUDGET) -> tuple:
    """(shape, RuleResult or None when the component is over budget)."""
    structure = classify_component(comp)
    shape = structure.shape
    if shape == Shape.SINGLETON:
        return shape, check_singleton_rule(comp)
    if shape == Shape.CLIQUE:
        return shape, check_clique_rule(comp)
    if shape == Shape.HYPERTREE:
        return shape, check_hypertree_rule(comp)
    if shape == Shape.RING:
        return shape, check_ring_rule(comp)
    if len(comp.nodes) > budget:
        return shape, None
    return shape, oracle_consistency(comp, budget=budget)


def _syntactic_results(instance, ics, comps, h) -> dict:
    """Component index -> RuleResult for components settled by a rule that
    looks only at the constraints."""
    settled = {}
    if not ics:
        return settled
    cls = classify_set(ics)
    if cls == SetClass.ONE_FD_PER_RELATION:
        for i, r in enumerate(check_fd_rule(instance, ics, h)):
            settled[i] = r
        return settled
    if cls != SetClass.DISJOINT_JOINFREE_OR_BEGD:
        return settled
    per_ic = {}
    for ic in ics:
        c = classify(ic)
        result = check_joinfree_rule(instance, ic) if c.join_free else None
        if result is None and c.tag in (Tag.FD, Tag.BINARY_EGD):
            result = check_begd_rule(instance, ic)
        if result is not None:
            per_ic[ic.name] = result
    for i, comp in enumerate(comps):
        if not comp.edges:
            continue
        names = {n for e in comp.edges for n in comp.provenance.get(e, ())}
        if len(names) != 1 or not names <= set(per_ic):
            continue
        result = per_ic[next(iter(names))]
        nodes = set(comp.nodes)
        # a condition belongs to the component of its first tuple
        own = [c for c in result.conditions if sort_nodes(c.nodes)[0] in nodes]
        settled[i] = RuleResult(result.rule, own)
    return settled


def check_consistency(instance: PDBInstance, ics: Sequence[DenialConstraint],
                      budget: int = DEFAULT_BUDGET, certificate: bool = False,
                      syntactic: bool = True) -> Verdict:
    h = build_conflict_hypergraph(instance, ics)
    probabilistic = bool(h.edge_prob)
    h = reduce_probabilistic_constraints(h)
    comps = components(h)
    settled = _syntactic_results(instance, ics, comps, h) if syntactic and not probabilistic else {}
    reports = []
    for i, comp in enumerate(comps):
        shape = classify_component(comp).shape
        result = settled.get(i)
        if result is None:
            shape, result = check_component(comp, budget)
        if result is None:
            reports.append(ComponentReport(
                i + 1, comp.nodes, shape.value, "lp", Outcome.UNKNOWN,
                reason=f"{len(comp.nodes)} tuples exceed the world budget of {budget}",
            ))
            continue
        outcome = Outcome.CONSISTENT if result.consistent else Outcome.INCONSISTENT
        cert = result.certificate
        if certificate and cert is None and outcome == Outcome.CONSISTENT and len(comp.nodes) <= budget:
            cert = oracle_consistency(comp, budget=budget).certificate
        reports.append(ComponentReport(i + 1, comp.nodes, shape.value, result.rule, outcome,
                                       list(result.conditions), cert))
    if any(r.outcome == Outcome.INCONSISTENT for r in reports):
        return Verdict(Outcome.INCONSISTENT, reports)
    unknown = [r for r in reports if r.outcome == Outcome.UNKNOWN]
    if unknown:
        return Verdict(Outcome.UNKNOWN, reports, f"component {unknown[0].component_id}: {unknown[0].reason}")
    return Verdict(Outcome.CONSISTENT, reports)


def oracle_check(instance: PDBInstance, ics: Sequence[DenialConstraint],
                 budget: int = DEFAULT_BUDGET) -> bool:
    """Consistency decided by the world LP alone, component by component."""
    h = reduce_probabilistic_constraints(build_conflict_hypergraph(instance, ics))
    return all(oracle_consistency(c, budget=budget).consistent for c in components(h))
