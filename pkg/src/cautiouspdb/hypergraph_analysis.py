"""Connected components of a conflict hypergraph and their shapes."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional, Sequence, Union

from .grounding import ConflictHypergraph, format_set, sort_edges, sort_nodes


class Shape(str, enum.Enum):
    SINGLETON = "Singleton"
    CLIQUE = "Clique"
    HYPERTREE = "Hypertree"
    RING = "Ring"
    MULTIPARTITE = "CompleteMultipartite"
    GENERAL = "General"


@dataclass(frozen=True)
class ComponentStructure:
    shape: Shape
    nodes: tuple
    edges: tuple
    order: Optional[tuple] = None       # hypertree elimination order or ring order
    partition: Optional[tuple] = None   # parts of a complete multipartite graph

    def describe(self) -> str:
        text = f"{self.shape.value} nodes={len(self.nodes)} edges={len(self.edges)}"
        if self.order is not None:
            text += " order=" + " ".join(format_set(e) for e in self.order)
        if self.partition is not None:
            text += " parts=" + " ".join(format_set(p) for p in self.partition)
        return text


EdgeSource = Union[ConflictHypergraph, Iterable[Iterable]]


def _edges(h: EdgeSource) -> list:
    if isinstance(h, ConflictHypergraph):
        return list(h.edges)
    out = []
    for e in h:
        e = frozenset(e)
        if e not in out:
            out.append(e)
    return out


def _nodes(h: EdgeSource, edges) -> set:
    if isinstance(h, ConflictHypergraph):
        return set(h.nodes)
    return set().union(*edges) if edges else set()


def _connected_groups(nodes: Iterable, edges: Sequence[frozenset]) -> list:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        it = iter(e)
        first = next(it, None)
        for n in it:
            ra, rb = find(first), find(n)
            if ra != rb:
                parent[ra] = rb
    groups = {}
    for n in parent:
        groups.setdefault(find(n), set()).add(n)
    return sorted((sort_nodes(g) for g in groups.values()), key=lambda g: sort_nodes(g)[0] if g else "")


def is_connected(edges: Sequence[frozenset], nodes: Optional[Iterable] = None) -> bool:
    nodes = set(nodes) if nodes is not None else set().union(*edges) if edges else set()
    if not nodes:
        return True
    return len(_connected_groups(nodes, edges)) == 1


def components(h: ConflictHypergraph) -> list:
    """Maximal connected components, ordered by their first node."""
    from .model import natural_key
    groups = _connected_groups(h.nodes, h.edges)
    groups.sort(key=lambda g: natural_key(g[0]))
    return [h.subgraph(g) for g in groups]


def int_sets(e, h: EdgeSource) -> set:
    """Nonempty intersections of ``e`` with the other edges of ``h``."""
    e = frozenset(e)
    edges = _edges(h)
    if e not in edges:
        raise ValueError(f"{format_set(e)} is not an edge")
    return {e & f for f in edges if f != e and e & f}


def is_matryoshka(sets: Iterable) -> bool:
    chain = sorted({frozenset(s) for s in sets}, key=len)
    return all(a < b for a, b in zip(chain, chain[1:]))


def is_hypertree(h: EdgeSource) -> Optional[list]:
    """Elimination order of a gamma-acyclic hypergraph, or None.

    Greedy elimination alone also accepts some hypergraphs with a gamma
    cycle, such as {a,b}, {a,c}, {a,b,c}, so its answer is confirmed by the
    definitional check.
    """
    order = greedy_elimination(h)
    if order is None or not is_gamma_acyclic(h):
        return None
    return order


def greedy_elimination(h: EdgeSource) -> Optional[list]:
    """Repeatedly drop an edge whose intersections form a matryoshka while the
    rest stays connected; the order if every edge goes, else None."""
    edges = _edges(h)
    if not edges or not is_connected(edges, _nodes(h, edges)):
        return None
    remaining = sort_edges(edges)
    order = []
    while len(remaining) > 1:
        for e in remaining:
            rest = [f for f in remaining if f != e]
            if is_matryoshka(int_sets(e, remaining)) and is_connected(rest):
                order.append(e)
                remaining = rest
                break
        else:
            return None
    return order + remaining


def is_gamma_acyclic(h: EdgeSource) -> bool:
    """Definitional check: connected, and no two intersecting edges whose
    residues stay connected once their common nodes are deleted everywhere."""
    edges = _edges(h)
    nodes = _nodes(h, edges)
    if not edges or not is_connected(edges, nodes):
        return False
    for e1, e2 in combinations(edges, 2):
        common = e1 & e2
        if not common:
            continue
        r1, r2 = e1 - common, e2 - common
        if not r1 or not r2:
            continue
        cut = [f - common for f in edges if f - common]
        for group in _connected_groups(set().union(*cut), cut):
            g = set(group)
            if g & r1 and g & r2:
                return False
    return True


def is_ring(h: EdgeSource) -> Optional[list]:
    """A cyclic edge order in which exactly the neighbours intersect, or None."""
    edges = sort_edges(_edges(h))
    m = len(edges)
    if m < 3:
        return None
    if not is_connected(edges, _nodes(h, edges)):
        return None
    adj = {e: [f for f in edges if f != e and e & f] for e in edges}
    if any(len(v) != 2 for v in adj.values()):
        return None
    order = [edges[0]]
    prev, cur = None, edges[0]
    while True:
        nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        if nxt == edges[0]:
            break
        order.append(nxt)
        prev, cur = cur, nxt
    return order if len(order) == m else None


def is_clique(h: EdgeSource) -> bool:
    edges = _edges(h)
    nodes = _nodes(h, edges)
    if any(len(e) != 2 for e in edges):
        return False
    present = set(edges)
    return all(frozenset(p) in present for p in combinations(nodes, 2))


def multipartite_partition(h: EdgeSource) -> Optional[list]:
    """Parts of a complete multipartite graph (classes of non-adjacency), or None."""
    edges = _edges(h)
    nodes = sort_nodes(_nodes(h, edges))
    if any(len(e) != 2 for e in edges):
        return None
    present = set(edges)
    parts = []
    placed = set()
    for n in nodes:
        if n in placed:
            continue
        part = [n] + [m for m in nodes if m != n and m not in placed and frozenset((n, m)) not in present]
        placed.update(part)
        parts.append(frozenset(part))
    for a, b in combinations(nodes, 2):
        same = any(a in p and b in p for p in parts)
        if same == (frozenset((a, b)) in present):
            return None
    return parts


def classify_component(h: ConflictHypergraph) -> ComponentStructure:
    nodes, edges = tuple(h.nodes), tuple(h.edges)

    def make(shape, order=None, partition=None):
        return ComponentStructure(
            shape, nodes, edges,
            tuple(order) if order is not None else None,
            tuple(partition) if partition is not None else None,
        )

    if len(nodes) == 1:
        return make(Shape.SINGLETON)
    # parts are reported whenever they exist, even under a more specific tag
    parts = multipartite_partition(h) if edges and all(len(e) == 2 for e in edges) else None
    if parts is not None and is_clique(h):
        return make(Shape.CLIQUE, partition=parts)
    order = is_hypertree(h)
    if order is not None:
        return make(Shape.HYPERTREE, order=order, partition=parts)
    order = is_ring(h)
    if order is not None:
        return make(Shape.RING, order=order, partition=parts)
    if parts is not None:
        return make(Shape.MULTIPARTITE, partition=parts)
    return make(Shape.GENERAL)
