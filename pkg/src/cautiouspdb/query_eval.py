"""Cautious answers to conjunctive queries as exact [pmin, pmax] intervals.

An answer's interval ranges over every model of the instance. Within a
component the bounds come from a closed form (cliques, trees, FD groups) or
from the world LP; across components they are combined either without any
assumption on correlation (Fréchet) or assuming independence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import product
from typing import Iterable, Mapping, Optional, Sequence

from .consistency import Outcome, Verdict, check_consistency
from .constraint_lang import ConjunctiveQuery, DenialConstraint, FDSpec, SetClass, classify_set, merged_fds
from .constraint_lang import parse_query as _parse_query
from .exact_lp import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    LinearProgram,
    add_event_objective,
    build_world_system,
    optimize_range,
)
from .grounding import (
    ConflictHypergraph,
    build_conflict_hypergraph,
    format_set,
    match_body,
    minimize,
    reduce_probabilistic_constraints,
    sort_edges,
    sort_nodes,
)
from .hypergraph_analysis import Shape, classify_component, components, is_connected
from .model import PDBInstance, ProbabilityInterval, natural_key

ZERO, ONE = Fraction(0), Fraction(1)
COMBINE_MODES = ("frechet", "independent")


class InconsistentInstance(ValueError):
    def __init__(self, verdict: Verdict):
        super().__init__(verdict.summary())
        self.verdict = verdict


def parse_query(text: str, schemas=None) -> ConjunctiveQuery:
    return _parse_query(text, schemas)


@dataclass(frozen=True)
class GroundAnswer:
    values: tuple
    witnesses: tuple  # of frozensets, minimal and sorted


@dataclass(frozen=True)
class Answer:
    values: tuple
    interval: Optional[ProbabilityInterval]
    status: str = "exact"  # exact | enclosure | unknown
    method: str = ""

    @property
    def pmin(self):
        return None if self.interval is None else self.interval.lo

    @property
    def pmax(self):
        return None if self.interval is None else self.interval.hi


@dataclass
class AnswerSet:
    answers: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.answers)

    def __len__(self):
        return len(self.answers)

    def get(self, values) -> Optional[Answer]:
        values = tuple(values)
        return next((a for a in self.answers if a.values == values), None)

    @property
    def has_unknown(self) -> bool:
        return any(a.status == "unknown" for a in self.answers)


def _value_key(values):
    return tuple((0, v, "") if not isinstance(v, str) else (1, 0, v) for v in values)


def ground_answers(query: ConjunctiveQuery, instance: PDBInstance) -> list:
    found = {}
    for binding, ids in match_body(query.atoms, query.builtins, instance):
        values = tuple(binding[v] for v in query.head)
        found.setdefault(values, set()).add(frozenset(ids))
    return [
        GroundAnswer(values, tuple(sort_edges(minimize(ws))))
        for values, ws in sorted(found.items(), key=lambda kv: _value_key(kv[0]))
    ]


# ---------------------------------------------------------------- combiners

def _interval(lo, hi) -> ProbabilityInterval:
    return ProbabilityInterval(Fraction(lo), Fraction(hi))


def frechet_combine(intervals: Iterable[ProbabilityInterval]) -> ProbabilityInterval:
    """Bounds of a conjunction of events with unknown correlation."""
    def step(a, b):
        return _interval(max(ZERO, a.lo + b.lo - 1), min(a.hi, b.hi))
    return reduce(step, intervals, _interval(ONE, ONE))


def independent_combine(intervals: Iterable[ProbabilityInterval]) -> ProbabilityInterval:
    """Bounds of a conjunction of independent events."""
    lo, hi = ONE, ONE
    for i in intervals:
        lo *= i.lo
        hi *= i.hi
    return _interval(lo, hi)


COMBINERS = {"frechet": frechet_combine, "independent": independent_combine}


# -------------------------------------------------------------- fast paths

def _point(marginals: Mapping, t) -> Fraction:
    b = marginals[t]
    if not b.is_point:
        raise ValueError(f"{t} has a probability range; closed forms need point probabilities")
    return b.lo


def _is_tree(component: ConflictHypergraph) -> bool:
    return (component.is_graph and len(component.edges) == len(component.nodes) - 1
            and is_connected(list(component.edges), component.nodes))


def _adjacency(component: ConflictHypergraph) -> dict:
    adj = {n: set() for n in component.nodes}
    for e in component.edges:
        a, b = tuple(e)
        adj[a].add(b)
        adj[b].add(a)
    return adj


def tree_path(adj: Mapping, a, b) -> list:
    prev = {a: None}
    queue = [a]
    for n in queue:
        if n == b:
            break
        for m in sort_nodes(adj[n]):
            if m not in prev:
                prev[m] = n
                queue.append(m)
    if b not in prev:
        raise ValueError(f"no path between {a} and {b}")
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


def path_bounds(path: Sequence, marginals: Mapping) -> ProbabilityInterval:
    """Bounds of ``path[0] and path[-1]`` on a chain, recursing inwards."""
    p = [_point(marginals, t) for t in path]
    lo_i, hi_i = 0, len(path) - 1
    if hi_i == lo_i:
        return _interval(p[0], p[0])
    # innermost pair first
    i, j = (len(path) - 1) // 2, len(path) // 2
    if i == j:
        cur = (p[i], p[i])
    else:
        cur = (ZERO, ZERO)
    while i > 0:
        i, j = i - 1, j + 1
        inner_min, inner_max = cur
        if j - i == 1:
            cur = (ZERO, ZERO)
            continue
        lo = max(ZERO, p[i] + p[j] - (1 - inner_min))
        hi = min(p[i], p[j], 1 - (p[i + 1] + p[j - 1] - inner_max))
        cur = (lo, hi)
    return _interval(*cur)


def chain_bounds(t, t2, component: ConflictHypergraph) -> ProbabilityInterval:
    if not _is_tree(component):
        raise ValueError("chain bounds need a tree component")
    return path_bounds(tree_path(_adjacency(component), t, t2), component.marginals)


def _spanning_subtree(adj: Mapping, targets: set) -> dict:
    sub = {n: set(ns) for n, ns in adj.items()}
    leaves = [n for n, ns in sub.items() if len(ns) <= 1 and n not in targets]
    while leaves:
        n = leaves.pop()
        if n not in sub:
            continue
        for m in sub.pop(n):
            sub[m].discard(n)
            if len(sub[m]) <= 1 and m not in targets:
                leaves.append(m)
    return sub


def tree_conjunction_bounds(component: ConflictHypergraph, tuples: Iterable,
                            max_key_nodes: int = 12) -> ProbabilityInterval:
    """Bounds of the conjunction of ``tuples`` inside a tree component.

    The tree is cut down to the subtree spanning the tuples. Its key nodes are
    the tuples plus the branching nodes, and consecutive key nodes are linked
    by chains. A small LP over truth assignments of the key nodes glues the
    chain bounds together.
    """
    T = sort_nodes(set(tuples))
    m = component.marginals
    if not _is_tree(component):
        raise ValueError("tree bounds need a tree component")
    if len(T) == 1:
        p = _point(m, T[0])
        return _interval(p, p)
    edges = set(component.edges)
    if any(frozenset((a, b)) in edges for a in T for b in T if a != b):
        return _interval(ZERO, ZERO)
    sub = _spanning_subtree(_adjacency(component), set(T))
    branching = sort_nodes(n for n, ns in sub.items() if len(ns) > 2 and n not in T)
    keys = T + branching
    if len(keys) > max_key_nodes:
        raise ValueError(f"{len(keys)} key nodes exceed the limit of {max_key_nodes}")
    is_key = set(keys)
    index = {k: i for i, k in enumerate(keys)}
    pairs = {}
    for k in keys:
        for start in sort_nodes(sub[k]):
            path = [k, start]
            while path[-1] not in is_key:
                nxt = [n for n in sub[path[-1]] if n != path[-2]]
                path.append(nxt[0])
            a, b = sorted((path[0], path[-1]), key=lambda n: index[n])
            if (a, b) not in pairs:
                pairs[(a, b)] = path if path[0] == a else path[::-1]

    lp = LinearProgram()
    alphas = list(product((0, 1), repeat=len(keys)))
    for alpha in alphas:
        lp.add_variable(alpha)
    for (a, b), path in sorted(pairs.items(), key=lambda kv: (index[kv[0][0]], index[kv[0][1]])):
        x = ("pair", a, b)
        lp.add_variable(x)
        i, j = index[a], index[b]
        coefs = {al: 1 for al in alphas if al[i] and al[j]}
        coefs[x] = -1
        lp.add_row(coefs, "=", 0, f"pair {a} {b}")
        bounds = path_bounds(path, m)
        lp.add_row({x: 1}, ">=", bounds.lo, f"pair {a} {b} min")
        lp.add_row({x: 1}, "<=", bounds.hi, f"pair {a} {b} max")
    for k in keys:
        i = index[k]
        lp.add_row({al: 1 for al in alphas if al[i]}, "=", _point(m, k), f"marginal {k}")
    lp.add_row({al: 1 for al in alphas}, "=", 1, "mass")
    target = {al: 1 for al in alphas if all(al[index[t]] for t in T)}
    lo, hi = optimize_range(lp, target)
    return _interval(lo, hi)


def clique_conjunction_bounds(component: ConflictHypergraph, tuples: Iterable) -> ProbabilityInterval:
    T = set(tuples)
    if len(T) >= 2:
        return _interval(ZERO, ZERO)
    p = _point(component.marginals, next(iter(T)))
    return _interval(p, p)


def fd_conjunction_bounds(instance: PDBInstance, fd: FDSpec, tuples: Iterable) -> ProbabilityInterval:
    """Bounds of a conjunction of tuples of one FD group.

    Tuples agreeing with T on the left-hand side but not on the right-hand
    side must avoid all of T, so T lives in a space of size
    S = 1 - sum over other right-hand values of their largest probability.
    """
    T = [instance.get(t) for t in sort_nodes(set(tuples))]
    keys = {fd.key(t.values) for t in T}
    if len(keys) > 1:
        raise ValueError("tuples with different left-hand sides are in different components")
    deps = {fd.dependent(t.values) for t in T}
    if len(deps) > 1:
        return _interval(ZERO, ZERO)
    ps = [_point(instance.marginals(), t.tuple_id) for t in T]
    (x,), (y,) = keys, deps
    others = {}
    for t in instance.relation(fd.relation):
        if fd.key(t.values) == x and fd.dependent(t.values) != y:
            others[fd.dependent(t.values)] = max(others.get(fd.dependent(t.values), ZERO),
                                                 _point(instance.marginals(), t.tuple_id))
    space = 1 - sum(others.values(), ZERO)
    lo = max(ZERO, sum(ps) - (len(ps) - 1) * space)
    return _interval(lo, min(ps))


def lp_conjunction_bounds(component: ConflictHypergraph, event,
                          budget: int = DEFAULT_BUDGET) -> ProbabilityInterval:
    """Exact bounds of an event over all models of the component.

    ``event`` is a set of tuples that must all be present, or a predicate on
    worlds. Raises BudgetExceeded when the component is too large.
    """
    lp = build_world_system(component.marginals, component.edges, budget)
    lp = add_event_objective(lp, event)
    lo, hi = optimize_range(lp)
    return _interval(lo, hi)


def any_witness(witnesses: Sequence[frozenset]):
    """World predicate: some witness is fully present."""
    ws = list(witnesses)
    return lambda w: any(x <= w for x in ws)


# ----------------------------------------------------------------- driver

@dataclass
class _Context:
    instance: PDBInstance
    hypergraph: ConflictHypergraph
    comps: list
    comp_of: dict
    shapes: dict
    fds: Optional[dict]
    budget: int


def _context(instance, ics, budget) -> _Context:
    h = build_conflict_hypergraph(instance, ics)
    probabilistic = bool(h.edge_prob)
    h = reduce_probabilistic_constraints(h)
    comps = components(h)
    comp_of = {n: i for i, c in enumerate(comps) for n in c.nodes}
    fds = None
    if not probabilistic and classify_set(ics) == SetClass.ONE_FD_PER_RELATION:
        fds = merged_fds(ics)
    return _Context(instance, h, comps, comp_of, {}, fds, budget)


def _shape(ctx: _Context, i: int) -> Shape:
    if i not in ctx.shapes:
        ctx.shapes[i] = classify_component(ctx.comps[i]).shape
    return ctx.shapes[i]


def conjunction_bounds(ctx: _Context, i: int, T: Sequence, fast: bool = True) -> tuple:
    """(interval, method) for all of T inside component i."""
    comp = ctx.comps[i]
    points = all(b.is_point for b in comp.marginals.values())
    if fast and points:
        if len(T) == 1:
            p = comp.marginals[T[0]].lo
            return _interval(p, p), "marginal"
        shape = _shape(ctx, i)
        if shape == Shape.CLIQUE:
            return clique_conjunction_bounds(comp, T), "clique"
        if shape == Shape.HYPERTREE and comp.is_graph:
            return tree_conjunction_bounds(comp, T), "tree"
        if ctx.fds is not None:
            rel = ctx.instance.get(T[0]).relation
            if rel in ctx.fds:
                return fd_conjunction_bounds(ctx.instance, ctx.fds[rel], T), "fd"
    return lp_conjunction_bounds(comp, set(T), ctx.budget), "lp"


def _split(ctx: _Context, nodes) -> dict:
    parts = {}
    for n in sort_nodes(nodes):
        parts.setdefault(ctx.comp_of[n], []).append(n)
    return parts


def _evaluate(ctx: _Context, ga: GroundAnswer, projection_free: bool, combine: str) -> Answer:
    combiner = COMBINERS[combine]
    witnesses = list(ga.witnesses)
    try:
        if len(witnesses) == 1:
            parts = _split(ctx, witnesses[0])
            results = [conjunction_bounds(ctx, i, T, fast=projection_free) for i, T in sorted(parts.items())]
            methods = sorted({m for _, m in results})
            return Answer(ga.values, combiner([r for r, _ in results]), "exact", "+".join(methods))
        involved = sorted(set(ctx.comp_of[n] for w in witnesses for n in w))
        if len(involved) == 1:
            comp = ctx.comps[involved[0]]
            return Answer(ga.values, lp_conjunction_bounds(comp, any_witness(witnesses), ctx.budget), "exact", "lp")
        union = [n for i in involved for n in ctx.comps[i].nodes]
        if combine == "frechet" and len(union) <= ctx.budget:
            sub = ctx.hypergraph.subgraph(union)
            return Answer(ga.values, lp_conjunction_bounds(sub, any_witness(witnesses), ctx.budget), "exact", "lp-union")
        # sound outer bounds: the likeliest witness from below, a union bound above
        per_witness = []
        for w in witnesses:
            parts = _split(ctx, w)
            per_witness.append(combiner([conjunction_bounds(ctx, i, T, fast=False)[0] for i, T in sorted(parts.items())]))
        lo = max(iv.lo for iv in per_witness)
        hi = min(ONE, sum((iv.hi for iv in per_witness), ZERO))
        return Answer(ga.values, _interval(lo, hi), "enclosure", "lp-per-component")
    except BudgetExceeded as exc:
        return Answer(ga.values, None, "unknown", str(exc))


def answer_query(instance: PDBInstance, ics: Sequence[DenialConstraint], query: ConjunctiveQuery,
                 combine: str = "frechet", budget: int = DEFAULT_BUDGET,
                 verdict: Optional[Verdict] = None) -> AnswerSet:
    """Cautious answers of ``query``. The instance must be consistent."""
    if combine not in COMBINERS:
        raise ValueError(f"unknown combination mode {combine!r}")
    verdict = verdict or check_consistency(instance, ics, budget=budget)
    if verdict.outcome != Outcome.CONSISTENT:
        raise InconsistentInstance(verdict)
    ctx = _context(instance, ics, budget)
    out = AnswerSet()
    for ga in ground_answers(query, instance):
        a = _evaluate(ctx, ga, query.projection_free, combine)
        if a.interval is not None and a.interval.hi == 0:
            continue
        out.answers.append(a)
    return out


def membership(instance: PDBInstance, ics: Sequence[DenialConstraint], query: ConjunctiveQuery,
               values: Sequence, k1, k2, combine: str = "frechet",
               budget: int = DEFAULT_BUDGET) -> bool:
    """Is ``values`` an answer with pmin >= k1 and pmax <= k2?"""
    k1, k2 = Fraction(k1), Fraction(k2)
    if not 0 <= k1 <= k2 <= 1:
        raise ValueError("thresholds must satisfy 0 <= k1 <= k2 <= 1")
    answers = answer_query(instance, ics, query, combine, budget)
    a = answers.get(tuple(values))
    if a is None or a.interval is None:
        return False
    if a.status != "exact":
        raise ValueError("the interval for this answer is not exact")
    return a.interval.lo >= k1 and a.interval.hi <= k2
