"""Conjunctive SPARQL subset: parsing, query graphs and query templates.

Pattern terms are plain strings; a term is a variable iff it starts with ``?``.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at offset {position})")


class UnsupportedQueryError(ValueError):
    pass


class TemplateIneligible(ValueError):
    pass


def is_var(term: str) -> bool:
    return term.startswith("?")


class TriplePattern(NamedTuple):
    s: str
    p: str
    o: str

    def variables(self) -> list[str]:
        """Distinct variables in subject, predicate, object order."""
        seen: list[str] = []
        for t in self:
            if is_var(t) and t not in seen:
                seen.append(t)
        return seen

    def __str__(self) -> str:
        return f"{self.s} {self.p} {self.o}"


@dataclass(frozen=True)
class BgpQuery:
    projection: tuple[str, ...]
    patterns: tuple[TriplePattern, ...]

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for tp in self.patterns:
            for v in tp.variables():
                seen.setdefault(v)
        return list(seen)

    @property
    def bounded(self) -> bool:
        """True when every predicate is a constant."""
        return not any(is_var(tp.p) for tp in self.patterns)

    def to_text(self, compact: bool = False) -> str:
        proj = " ".join(self.projection)
        if compact:
            return f"SELECT {proj} WHERE {{ {' . '.join(str(tp) for tp in self.patterns)} }}"
        body = " .\n  ".join(str(tp) for tp in self.patterns)
        return f"SELECT {proj} WHERE {{\n  {body}\n}}"


_TOKEN = re.compile(r"[{}]|[^\s{}]+")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    for m in _TOKEN.finditer(text):
        tok, pos = m.group(), m.start()
        # "?x." is unambiguous for variables; constants such as "Prof.X" keep their dots
        if len(tok) > 1 and tok.endswith(".") and is_var(tok):
            tokens.append((tok[:-1], pos))
            tokens.append((".", pos + len(tok) - 1))
        else:
            tokens.append((tok, pos))
    return tokens


def parse_query(text: str) -> BgpQuery:
    """Parse ``SELECT <vars|*> WHERE { s p o [.] ... }``.

    Patterns may be separated by ``.`` or just by whitespace. Queries whose
    patterns are not connected through shared variables are rejected.
    """
    tokens = _tokenize(text)
    end = len(text)
    i = 0

    def peek() -> tuple[str, int]:
        return tokens[i] if i < len(tokens) else ("", end)

    tok, pos = peek()
    if tok.upper() != "SELECT":
        raise QuerySyntaxError("expected SELECT", pos)
    i += 1
    projection: list[str] = []
    star = False
    while True:
        tok, pos = peek()
        if tok.upper() == "WHERE":
            i += 1
            break
        if tok == "*" and not projection and not star:
            star = True
        elif is_var(tok) and len(tok) > 1 and not star:
            projection.append(tok)
        else:
            raise QuerySyntaxError(f"unexpected token {tok!r} in projection", pos)
        i += 1
    tok, pos = peek()
    if tok != "{":
        raise QuerySyntaxError("expected '{'", pos)
    i += 1
    patterns: list[TriplePattern] = []
    while True:
        tok, pos = peek()
        if tok == "}":
            i += 1
            break
        if tok == ".":
            if not patterns:
                raise QuerySyntaxError("unexpected '.'", pos)
            i += 1
            continue
        terms = []
        for _ in range(3):
            tok, pos = peek()
            if tok in ("", "{", "}", "."):
                raise QuerySyntaxError("incomplete triple pattern", pos)
            if tok == "?":
                raise QuerySyntaxError("empty variable name", pos)
            terms.append(tok)
            i += 1
        patterns.append(TriplePattern(*terms))
    if i != len(tokens):
        raise QuerySyntaxError("trailing input after '}'", tokens[i][1])
    if not patterns:
        raise QuerySyntaxError("empty group pattern", end)

    query = BgpQuery(tuple(projection), tuple(patterns))
    if star:
        query = BgpQuery(tuple(query.variables()), query.patterns)
    missing = set(query.projection) - set(query.variables())
    if missing:
        raise UnsupportedQueryError(f"projected variables not in any pattern: {sorted(missing)}")
    validate_connected(query)
    return query


def validate_connected(query: BgpQuery) -> None:
    """Reject cartesian products.

    Patterns carrying variables must form one component under shared variables;
    ground patterns are existence filters but must touch the query graph.
    """
    graph = to_query_graph(query)
    if not graph.is_connected():
        raise UnsupportedQueryError("query graph is disconnected")
    with_vars = [set(tp.variables()) for tp in query.patterns if tp.variables()]
    if len(with_vars) <= 1:
        return
    reached = set(with_vars[0])
    pending = with_vars[1:]
    progress = True
    while pending and progress:
        progress = False
        for vs in list(pending):
            if vs & reached:
                reached |= vs
                pending.remove(vs)
                progress = True
    if pending:
        raise UnsupportedQueryError("patterns are connected only through constants (cartesian product)")


def parse_query_file(text: str) -> list[BgpQuery]:
    """Queries separated by lines consisting of ``---``."""
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip() == "---":
            blocks.append("\n".join(current))
            current = []
        else:
            current.append(line)
    blocks.append("\n".join(current))
    return [parse_query(b) for b in blocks if b.strip() and not _only_comments(b)]


def _only_comments(block: str) -> bool:
    return all(not ln.strip() or ln.strip().startswith("#") for ln in block.splitlines())


class QueryEdge(NamedTuple):
    index: int  # position of the originating pattern
    u: str  # subject vertex
    predicate: str
    v: str  # object vertex


@dataclass
class QueryGraph:
    """Undirected multigraph over subjects/objects; edges keep their direction u->v."""

    vertices: list[str]
    edges: list[QueryEdge]
    scores: dict[str, float] = field(default_factory=dict)

    def incident(self, vertex: str) -> list[QueryEdge]:
        return [e for e in self.edges if e.u == vertex or e.v == vertex]

    def out_predicates(self, vertex: str) -> list[str]:
        return [e.predicate for e in self.edges if e.u == vertex]

    def in_predicates(self, vertex: str) -> list[str]:
        return [e.predicate for e in self.edges if e.v == vertex]

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for e in self.edges:
            adj[e.u].add(e.v)
            adj[e.v].add(e.u)
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)


def to_query_graph(query: BgpQuery) -> QueryGraph:
    vertices: dict[str, None] = {}
    edges = []
    for i, tp in enumerate(query.patterns):
        vertices.setdefault(tp.s)
        vertices.setdefault(tp.o)
        edges.append(QueryEdge(i, tp.s, tp.p, tp.o))
    return QueryGraph(list(vertices), edges)


@dataclass(frozen=True)
class TemplateKey:
    """Canonical shape: (predicate, subject vertex no., object vertex no.) per pattern."""

    encoding: tuple[tuple[str, int, int], ...]

    @property
    def n_vertices(self) -> int:
        return 1 + max(max(s, o) for _, s, o in self.encoding)


@dataclass(frozen=True)
class TemplateMatch:
    key: TemplateKey
    # original subject/object term per template vertex, indexed by vertex number
    vertex_terms: tuple[str, ...]


def _encode(order: Iterable[TriplePattern]) -> tuple[tuple, list[str]]:
    numbering: dict[str, int] = {}
    enc = []
    for tp in order:
        s = numbering.setdefault(tp.s, len(numbering))
        o = numbering.setdefault(tp.o, len(numbering))
        enc.append((tp.p, s, o))
    return tuple(enc), list(numbering)


def derive_template(query: BgpQuery) -> TemplateMatch:
    """Lift every subject/object constant to a vertex and canonicalize.

    The key is the lexicographically smallest encoding over all pattern orders
    sorted by predicate, numbering vertices by first appearance. Equal keys
    mean isomorphic shapes with identical predicates.
    """
    if not query.bounded:
        raise TemplateIneligible("queries with variable predicates have no template")
    ordered = sorted(query.patterns, key=lambda tp: tp.p)
    groups = [list(g) for _, g in itertools.groupby(ordered, key=lambda tp: tp.p)]
    best: tuple | None = None
    best_terms: list[str] = []
    for combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        enc, terms = _encode(tp for group in combo for tp in group)
        if best is None or enc < best:
            best, best_terms = enc, terms
    assert best is not None
    return TemplateMatch(TemplateKey(best), tuple(best_terms))


def canonical_form(query: BgpQuery) -> TemplateKey:
    return derive_template(query).key
