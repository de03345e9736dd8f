"""Core selection, redistribution trees, the query index, and join ordering."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .bgp import BgpQuery, QueryGraph, TriplePattern, is_var, to_query_graph
from .stats import GlobalStats, score_graph

OUT = "out"  # child vertex is the object of the edge
IN = "in"  # child vertex is the subject of the edge
WILDCARD = "?"


class NoCoreError(ValueError):
    pass


def _tie_key(vertex: str, score: float) -> tuple:
    return (-score, vertex)


def select_core(graph: QueryGraph) -> str:
    """Highest scoring vertex; ties go to the lexicographically smallest label."""
    if not graph.scores:
        raise NoCoreError("query graph has not been scored")
    best = min(graph.vertices, key=lambda v: _tie_key(v, graph.scores[v]))
    if graph.scores[best] == -math.inf:
        raise NoCoreError("every vertex is filtered; query stays on semi-joins")
    return best


@dataclass
class TreeEdge:
    pattern_index: int
    predicate: str
    parent_vertex: str
    child_vertex: str
    direction: str
    parent: "TreeEdge | None"
    level: int

    @property
    def pattern(self) -> TriplePattern:
        if self.direction == OUT:
            return TriplePattern(self.parent_vertex, self.predicate, self.child_vertex)
        return TriplePattern(self.child_vertex, self.predicate, self.parent_vertex)

    def __repr__(self) -> str:
        arrow = "->" if self.direction == OUT else "<-"
        return f"L{self.level}:{self.parent_vertex}{arrow}[{self.predicate}]{self.child_vertex}"


@dataclass
class RedistTree:
    root: str
    edges: list[TreeEdge]  # in extraction order; parents precede children

    @property
    def levels(self) -> int:
        return max((e.level for e in self.edges), default=0)

    def at_level(self, level: int) -> list[TreeEdge]:
        return [e for e in self.edges if e.level == level]

    def children(self, edge: TreeEdge | None) -> list[TreeEdge]:
        return [e for e in self.edges if e.parent is edge]


def build_redistribution_tree(graph: QueryGraph, core: str) -> RedistTree:
    """Decompose the query graph into a tree rooted at ``core``.

    Pending edges are extracted by the score of the vertex they lead to
    (ties: predicate, then that vertex's label, then insertion order), and
    each extracted edge enqueues the unexplored edges at its far end.
    Traversal ignores RDF edge direction.
    """
    if core not in graph.vertices:
        raise ValueError(f"core {core!r} is not a query vertex")
    scores = graph.scores
    seq = itertools.count()
    explored: set[int] = set()
    pending: list = []

    def adjacency(vertex: str):
        # canonical order keeps trees independent of the textual pattern order
        return sorted(
            graph.incident(vertex),
            key=lambda e: (e.predicate, e.v if e.u == vertex else e.u, e.u != vertex, e.index),
        )

    def push(edge, at: str, parent: TreeEdge | None) -> None:
        explored.add(edge.index)
        child = edge.v if edge.u == at else edge.u
        direction = OUT if edge.u == at else IN
        key = (-scores.get(child, -math.inf), edge.predicate, child, next(seq))
        heapq.heappush(pending, (key, edge, at, child, direction, parent))

    for e in adjacency(core):
        push(e, core, None)
    out: list[TreeEdge] = []
    while pending:
        _, edge, at, child, direction, parent = heapq.heappop(pending)
        level = 1 if parent is None else parent.level + 1
        te = TreeEdge(edge.index, edge.predicate, at, child, direction, parent, level)
        out.append(te)
        for adj in adjacency(child):
            if adj.index not in explored:
                push(adj, child, te)
    if len(out) != len(graph.edges):
        raise ValueError("query graph is disconnected")
    return RedistTree(core, out)


def plan_tree(query: BgpQuery, stats: GlobalStats, core: str | None = None) -> RedistTree:
    """Score, pick the core (unless given) and build the tree for ``query``."""
    graph = score_graph(to_query_graph(query), stats)
    if core is None:
        core = select_core(graph)
    return build_redistribution_tree(graph, core)


def index_label(term: str) -> str:
    return WILDCARD if is_var(term) else term


@dataclass
class IndexEdge:
    id: int
    parent_id: int | None  # None for edges hanging off a root
    root_label: str
    parent_label: str
    predicate: str
    direction: str
    child_label: str
    level: int

    @property
    def pattern(self) -> TriplePattern:
        """Subquery of the edge; wildcards get distinct names so self-loops stay unconstrained."""
        parent = "?parent" if self.parent_label == WILDCARD else self.parent_label
        child = "?child" if self.child_label == WILDCARD else self.child_label
        if self.direction == OUT:
            return TriplePattern(parent, self.predicate, child)
        return TriplePattern(child, self.predicate, parent)

    @property
    def child_column(self) -> int:
        return 2 if self.direction == OUT else 0

    @property
    def parent_column(self) -> int:
        return 0 if self.direction == OUT else 2

    def key(self) -> tuple:
        parent = ("root", self.root_label) if self.parent_id is None else ("edge", self.parent_id)
        return (parent, self.predicate, self.direction, self.child_label)


@dataclass
class QueryIndex:
    """Forest of redistributed tree shapes; labels are constants or the wildcard."""

    edges: dict[int, IndexEdge] = field(default_factory=dict)
    _by_key: dict[tuple, int] = field(default_factory=dict)
    _next_id: int = 0

    def __len__(self) -> int:
        return len(self.edges)

    def find(self, parent_id: int | None, root_label: str, predicate: str, direction: str, child_label: str) -> IndexEdge | None:
        parent = ("root", root_label) if parent_id is None else ("edge", parent_id)
        eid = self._by_key.get((parent, predicate, direction, child_label))
        return None if eid is None else self.edges[eid]

    def new_edge(self, parent: IndexEdge | None, root_label: str, predicate: str, direction: str, child_label: str) -> IndexEdge:
        edge = IndexEdge(
            id=self._next_id,
            parent_id=None if parent is None else parent.id,
            root_label=root_label,
            parent_label=root_label if parent is None else parent.child_label,
            predicate=predicate,
            direction=direction,
            child_label=child_label,
            level=1 if parent is None else parent.level + 1,
        )
        self._next_id += 1
        return edge

    def add(self, edge: IndexEdge) -> None:
        self.edges[edge.id] = edge
        self._by_key[edge.key()] = edge.id
        self._next_id = max(self._next_id, edge.id + 1)

    def remove(self, edge_id: int) -> None:
        edge = self.edges.pop(edge_id)
        del self._by_key[edge.key()]

    def children(self, parent_id: int | None, root_label: str | None = None) -> list[IndexEdge]:
        if parent_id is None:
            return [e for e in self.edges.values() if e.parent_id is None and e.root_label == root_label]
        return [e for e in self.edges.values() if e.parent_id == parent_id]

    def roots(self) -> list[str]:
        return sorted({e.root_label for e in self.edges.values() if e.parent_id is None})

    def path(self, edge_id: int) -> tuple:
        """(root label, (predicate, direction, child label)...) from the root down."""
        steps = []
        e = self.edges[edge_id]
        while True:
            steps.append((e.predicate, e.direction, e.child_label))
            if e.parent_id is None:
                break
            e = self.edges[e.parent_id]
        return (e.root_label,) + tuple(reversed(steps))

    def shape(self) -> set[tuple]:
        return {self.path(eid) for eid in self.edges}


def _compatible(index_label_: str, query_term: str) -> bool:
    return index_label_ == WILDCARD or index_label_ == query_term


def check_parallel_eligibility(tree: RedistTree, qi: QueryIndex) -> dict[int, int] | None:
    """Map every tree edge onto a query-index edge, level by level from the root.

    Returns ``{pattern_index: index_edge_id}`` or ``None`` when ineligible.
    Index wildcards cover any query term; index constants only cover the same
    constant. Candidates are tried in index-id order, first full match wins.
    """
    if not qi.edges or not tree.edges:
        return None
    if any(is_var(e.predicate) for e in tree.edges):
        return None
    roots = [r for r in (tree.root, WILDCARD) if not is_var(tree.root) or r == WILDCARD]
    order = tree.edges
    for root_label in dict.fromkeys(roots):
        if root_label not in qi.roots():
            continue
        assignment: dict[int, IndexEdge] = {}

        def solve(i: int) -> bool:
            if i == len(order):
                return True
            te = order[i]
            parent_id = None if te.parent is None else assignment[id(te.parent)].id
            cands = sorted(qi.children(parent_id, root_label), key=lambda e: e.id)
            for ie in cands:
                if ie.predicate == te.predicate and ie.direction == te.direction and _compatible(ie.child_label, te.child_vertex):
                    assignment[id(te)] = ie
                    if solve(i + 1):
                        return True
                    del assignment[id(te)]
            return False

        if solve(0):
            return {te.pattern_index: assignment[id(te)].id for te in order}
    return None


@dataclass
class JoinPlan:
    order: list[int]  # pattern indexes
    join_vars: list[tuple[str, ...]]  # shared variables per step; first entry empty


def order_joins(query: BgpQuery, cardinalities: Sequence[int]) -> JoinPlan:
    """Start from the smallest subquery, then repeatedly take the smallest connected one.

    Ties fall back to textual pattern order. Ground patterns (no variables)
    connect to anything.
    """
    pats = query.patterns
    remaining = list(range(len(pats)))
    first = min(remaining, key=lambda i: (cardinalities[i], i))
    order = [first]
    remaining.remove(first)
    bound = set(pats[first].variables())
    join_vars: list[tuple[str, ...]] = [()]
    while remaining:
        def connected(i: int) -> bool:
            vs = pats[i].variables()
            return not vs or not bound or bool(bound & set(vs))

        cands = [i for i in remaining if connected(i)]
        if not cands:
            raise ValueError("query is not connected through shared variables")
        nxt = min(cands, key=lambda i: (cardinalities[i], i))
        vs = pats[nxt].variables()
        join_vars.append(tuple(v for v in vs if v in bound))
        bound |= set(vs)
        order.append(nxt)
        remaining.remove(nxt)
    return JoinPlan(order, join_vars)
