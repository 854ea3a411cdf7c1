"""Ground constraints into minimal conflicting sets and the conflict hypergraph."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Sequence

from .constraint_lang import Atom, BuiltinPredicate, Const, DenialConstraint, Var
from .model import PDBInstance, ProbabilityBound, natural_key


def edge_key(edge) -> tuple:
    return (len(edge), sorted(natural_key(n) for n in edge))


def sort_edges(edges) -> list:
    return sorted(edges, key=lambda e: sorted(natural_key(n) for n in e))


def sort_nodes(nodes) -> list:
    return sorted(nodes, key=natural_key)


def format_set(nodes) -> str:
    return "{" + ", ".join(sort_nodes(nodes)) + "}"


@dataclass(frozen=True)
class ConflictHypergraph:
    """Tuples as nodes and minimal conflicting sets as edges.

    ``marginals`` maps every node to its probability bound, so that auxiliary
    nodes added for probabilistic constraints carry their own marginal.
    """
    nodes: tuple
    edges: tuple
    marginals: Mapping[str, ProbabilityBound]
    edge_prob: Mapping[frozenset, Fraction] = field(default_factory=dict)
    provenance: Mapping[frozenset, tuple] = field(default_factory=dict)

    @classmethod
    def make(cls, marginals, edges, edge_prob=None, provenance=None) -> "ConflictHypergraph":
        uniq = []
        seen = set()
        for e in edges:
            e = frozenset(e)
            if e not in seen:
                seen.add(e)
                uniq.append(e)
        nodes = tuple(sort_nodes(marginals))
        return cls(
            nodes,
            tuple(sort_edges(uniq)),
            dict(marginals),
            dict(edge_prob or {}),
            dict(provenance or {}),
        )

    def subgraph(self, nodes) -> "ConflictHypergraph":
        nodes = set(nodes)
        edges = [e for e in self.edges if e <= nodes]
        return ConflictHypergraph(
            tuple(n for n in self.nodes if n in nodes),
            tuple(edges),
            {n: self.marginals[n] for n in self.nodes if n in nodes},
            {e: p for e, p in self.edge_prob.items() if e in set(edges)},
            {e: p for e, p in self.provenance.items() if e in set(edges)},
        )

    @property
    def is_graph(self) -> bool:
        return all(len(e) == 2 for e in self.edges)

    def edges_of(self, node) -> list:
        return [e for e in self.edges if node in e]

    def neighbours(self, node) -> set:
        out = set()
        for e in self.edges:
            if node in e:
                out |= e
        out.discard(node)
        return out

    def edge_probability(self, edge) -> Fraction:
        return self.edge_prob.get(frozenset(edge), Fraction(1))


# ------------------------------------------------------------------ matching

def _resolve(term, binding):
    if isinstance(term, Const):
        return True, term.value
    if term in binding:
        return True, binding[term]
    return False, None


def match_body(atoms: Sequence[Atom], builtins: Sequence[BuiltinPredicate],
               instance: PDBInstance) -> Iterator[tuple]:
    """Yield ``(binding, tuple ids per atom)`` for every satisfying assignment.

    Nested-loop join; each builtin is applied as soon as its variables are bound.
    """
    selections = {}
    for a in atoms:
        if a not in selections:
            cands = []
            for t in instance.relation(a.relation):
                if all(not isinstance(term, Const) or term.value == v for term, v in zip(a.terms, t.values)):
                    cands.append(t)
            selections[a] = cands

    ready = [[] for _ in atoms]
    pending = []
    for b in builtins:
        if b.constant_only:
            if not b.holds(b.left.value, b.right.value):
                return
            continue
        pending.append(b)
    bound_after = set()
    for i, a in enumerate(atoms):
        bound_after |= set(a.variables())
        for b in list(pending):
            if all(v in bound_after for v in b.variables()):
                ready[i].append(b)
                pending.remove(b)

    binding = {}
    chosen = []

    def step(i):
        if i == len(atoms):
            yield dict(binding), tuple(chosen)
            return
        a = atoms[i]
        for t in selections[a]:
            added = []
            ok = True
            for term, v in zip(a.terms, t.values):
                if isinstance(term, Var):
                    if term in binding:
                        if binding[term] != v:
                            ok = False
                            break
                    else:
                        binding[term] = v
                        added.append(term)
            if ok:
                for b in ready[i]:
                    _, lv = _resolve(b.left, binding)
                    _, rv = _resolve(b.right, binding)
                    if not b.holds(lv, rv):
                        ok = False
                        break
            if ok:
                chosen.append(t.tuple_id)
                yield from step(i + 1)
                chosen.pop()
            for term in added:
                del binding[term]

    yield from step(0)


def minimize(sets) -> list:
    """Drop every set that strictly contains another; duplicates collapse."""
    uniq = sorted(set(frozenset(s) for s in sets), key=len)
    kept = []
    for s in uniq:
        if not any(k < s for k in kept):
            kept.append(s)
    return kept


def ground_constraint(instance: PDBInstance, ic: DenialConstraint) -> set:
    return {frozenset(ids) for _, ids in match_body(ic.atoms, ic.builtins, instance)}


def conflicting_sets(instance: PDBInstance, ics: Sequence[DenialConstraint]) -> list:
    """Minimal conflicting sets under the hard constraints of ``ics``."""
    grounded = set()
    for ic in ics:
        if ic.probability == 1:
            grounded |= ground_constraint(instance, ic)
    return sort_edges(minimize(grounded))


def build_conflict_hypergraph(instance: PDBInstance, ics: Sequence[DenialConstraint]) -> ConflictHypergraph:
    per_ic = [(ic, ground_constraint(instance, ic)) for ic in ics]
    hard = minimize(set().union(set(), *(g for ic, g in per_ic if ic.probability == 1)))
    # Soft sets only compete with sets of the same constraint; a soft set
    # containing a hard edge adds nothing.
    soft = {}
    for ic, g in per_ic:
        if ic.probability in (0, 1):
            continue
        for e in minimize(g):
            if not any(h <= e for h in hard):
                soft[e] = max(soft.get(e, Fraction(0)), ic.probability)
    provenance = {}
    for e in list(hard) + list(soft):
        provenance[e] = tuple(ic.name for ic, g in per_ic if e in g)
    return ConflictHypergraph.make(instance.marginals(), list(hard) + list(soft), soft, provenance)


def reduce_probabilistic_constraints(h: ConflictHypergraph, prefix: str = "aux") -> ConflictHypergraph:
    """Give every edge with probability below 1 a fresh node carrying that
    probability; the result has only hard edges."""
    if not h.edge_prob:
        return h
    marginals = dict(h.marginals)
    edges, provenance = [], {}
    k = 0
    for e in h.edges:
        p = h.edge_probability(e)
        new = e
        if p < 1:
            k += 1
            aux = f"{prefix}{k}"
            while aux in marginals:
                k += 1
                aux = f"{prefix}{k}"
            marginals[aux] = ProbabilityBound.point(p)
            new = e | {aux}
        edges.append(new)
        provenance[new] = h.provenance.get(e, ())
    return ConflictHypergraph.make(marginals, edges, {}, provenance)
