"""Predicate-keyed storage modules, the worker main index, and local joins.

Inside a worker, pattern constants are term ids (ints) and variables are
``?``-prefixed strings.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .terms import Dictionary

Pair = tuple[int, int]


class StorageModule:
    """Three views over one pool of (subject, object) pairs per predicate.

    Every pair tuple is created once; the subject and object maps hold
    references to that same tuple.
    """

    def __init__(self) -> None:
        self._by_p: dict[int, dict[Pair, None]] = {}
        self._by_ps: dict[int, dict[int, dict[Pair, None]]] = {}
        self._by_po: dict[int, dict[int, dict[Pair, None]]] = {}
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def __contains__(self, triple: tuple[int, int, int]) -> bool:
        s, p, o = triple
        pairs = self._by_p.get(p)
        return pairs is not None and (s, o) in pairs

    def add(self, s: int, p: int, o: int) -> bool:
        pairs = self._by_p.get(p)
        if pairs is None:
            pairs = self._by_p[p] = {}
            self._by_ps[p] = {}
            self._by_po[p] = {}
        elif (s, o) in pairs:
            return False
        pair = (s, o)
        pairs[pair] = None
        self._by_ps[p].setdefault(s, {})[pair] = None
        self._by_po[p].setdefault(o, {})[pair] = None
        self._size += 1
        return True

    def remove(self, s: int, p: int, o: int) -> bool:
        pairs = self._by_p.get(p)
        if pairs is None or (s, o) not in pairs:
            return False
        pair = (s, o)
        del pairs[pair]
        bucket = self._by_ps[p][s]
        del bucket[pair]
        if not bucket:
            del self._by_ps[p][s]
        bucket = self._by_po[p][o]
        del bucket[pair]
        if not bucket:
            del self._by_po[p][o]
        if not pairs:
            del self._by_p[p], self._by_ps[p], self._by_po[p]
        self._size -= 1
        return True

    def clear(self) -> None:
        self.__init__()

    def predicates(self) -> list[int]:
        return list(self._by_p)

    def pairs(self, p: int) -> Iterable[Pair]:
        return self._by_p.get(p, {}).keys()

    def by_subject(self, p: int, s: int) -> Iterable[Pair]:
        return self._by_ps.get(p, {}).get(s, {}).keys()

    def by_object(self, p: int, o: int) -> Iterable[Pair]:
        return self._by_po.get(p, {}).get(o, {}).keys()

    def subjects(self, p: int) -> Iterable[int]:
        return self._by_ps.get(p, {}).keys()

    def objects(self, p: int) -> Iterable[int]:
        return self._by_po.get(p, {}).keys()

    def count(self, p: int, s: int | None = None, o: int | None = None) -> int:
        if s is None and o is None:
            return len(self._by_p.get(p, ()))
        if o is None:
            return len(self._by_ps.get(p, {}).get(s, ()))
        if s is None:
            return len(self._by_po.get(p, {}).get(o, ()))
        return int((s, p, o) in self)

    def triples(self) -> Iterator[tuple[int, int, int]]:
        for p, pairs in self._by_p.items():
            for s, o in pairs:
                yield s, p, o

    def match(self, s: int | None, p: int, o: int | None) -> Iterable[Pair]:
        """Pairs of predicate ``p`` agreeing with the bound positions."""
        if s is not None and o is not None:
            return [(s, o)] if (s, p, o) in self else []
        if s is not None:
            return self.by_subject(p, s)
        if o is not None:
            return self.by_object(p, o)
        return self.pairs(p)

    def view_sizes(self, p: int) -> tuple[int, int, int]:
        """Pair counts reachable from each of the three maps for ``p``."""
        a = len(self._by_p.get(p, ()))
        b = sum(len(v) for v in self._by_ps.get(p, {}).values())
        c = sum(len(v) for v in self._by_po.get(p, {}).values())
        return a, b, c


@dataclass
class WorkerStore:
    """Main index over a worker's local triples, plus per-vertex degrees."""

    main: StorageModule = field(default_factory=StorageModule)
    dict: Dictionary = field(default_factory=Dictionary)
    degree: dict[int, int] = field(default_factory=lambda: defaultdict(int))

    def insert(self, s: str, p: str, o: str) -> bool:
        d = self.dict
        return insert_triple(self, (d.intern(s), d.intern(p), d.intern(o)))

    def delete(self, s: str, p: str, o: str) -> bool:
        ids = [self.dict.lookup(t) for t in (s, p, o)]
        if None in ids:
            return False
        return delete_triple(self, tuple(ids))

    def __len__(self) -> int:
        return len(self.main)


def insert_triple(store: WorkerStore, t: tuple[int, int, int]) -> bool:
    s, p, o = t
    if not store.main.add(s, p, o):
        return False
    store.degree[s] += 1
    store.degree[o] += 1
    return True


def delete_triple(store: WorkerStore, t: tuple[int, int, int]) -> bool:
    s, p, o = t
    if not store.main.remove(s, p, o):
        return False
    for v in (s, o):
        store.degree[v] -= 1
        if store.degree[v] == 0:
            del store.degree[v]
    return True


class CartesianProductError(ValueError):
    pass


class UnsupportedPattern(ValueError):
    pass


@dataclass
class BindingTable:
    """Set-semantics relation over named variables."""

    header: tuple[str, ...]
    rows: set[tuple] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.rows)

    def project(self, variables: Sequence[str]) -> "BindingTable":
        idx = [self.header.index(v) for v in variables]
        return BindingTable(tuple(variables), {tuple(r[i] for i in idx) for r in self.rows})

    def union(self, other: "BindingTable") -> "BindingTable":
        if other.header != self.header:
            other = other.project(self.header)
        return BindingTable(self.header, self.rows | other.rows)


def _is_var(x) -> bool:
    return isinstance(x, str)


def answer_subquery(module: StorageModule, tp: Sequence) -> BindingTable:
    """Bindings of ``tp``'s variables over ``module``.

    ``tp`` is (s, p, o) with int constants and ``?``-string variables; the
    predicate must be bound. A constant id of ``None`` (term unknown to the
    worker) matches nothing.
    """
    s, p, o = tp
    if _is_var(p):
        raise UnsupportedPattern("answer_subquery needs a bound predicate")
    s_var, o_var = _is_var(s), _is_var(o)
    header = tuple(v for v in dict.fromkeys(x for x in (s, o) if _is_var(x)))
    if p is None or (not s_var and s is None) or (not o_var and o is None):
        return BindingTable(header)
    pairs = module.match(None if s_var else s, p, None if o_var else o)
    if s_var and o_var:
        if s == o:
            rows = {(a,) for a, b in pairs if a == b}
        else:
            rows = set(pairs)
    elif s_var:
        rows = {(a,) for a, _ in pairs}
    elif o_var:
        rows = {(b,) for _, b in pairs}
    else:
        rows = {()} if pairs else set()
    return BindingTable(header, rows)


def match_pattern(module: StorageModule, tp: Sequence) -> BindingTable:
    """Like :func:`answer_subquery` but also scans every predicate for a variable one."""
    s, p, o = tp
    if not _is_var(p):
        return answer_subquery(module, tp)
    header = tuple(dict.fromkeys(x for x in (s, p, o) if _is_var(x)))
    rows: set[tuple] = set()
    for pred in module.predicates():
        bound = {p: pred}
        sub = answer_subquery(module, (s, pred, o))
        for r in sub.rows:
            b = dict(zip(sub.header, r))
            if b.get(p, pred) != pred:
                continue
            b.update(bound)
            rows.add(tuple(b[v] for v in header))
    return BindingTable(header, rows)


def local_hash_join(left: BindingTable, right: BindingTable, on: Sequence[str] | None = None) -> BindingTable:
    """Natural join on ``on`` (defaults to the shared variables).

    An empty join key is only allowed when one side has no columns, which
    makes it a filter rather than a cartesian product.
    """
    if on is None:
        on = [v for v in left.header if v in right.header]
    on = list(on)
    if not on and left.header and right.header:
        raise CartesianProductError("join without shared variables")
    extra = [v for v in right.header if v not in left.header]
    header = left.header + tuple(extra)
    if not left.rows or not right.rows:
        return BindingTable(header)
    li = [left.header.index(v) for v in on]
    ri = [right.header.index(v) for v in on]
    ei = [right.header.index(v) for v in extra]
    rows: set[tuple] = set()
    if len(left.rows) <= len(right.rows):
        table: dict[tuple, list[tuple]] = defaultdict(list)
        for r in left.rows:
            table[tuple(r[i] for i in li)].append(r)
        for r in right.rows:
            for l in table.get(tuple(r[i] for i in ri), ()):
                rows.add(l + tuple(r[i] for i in ei))
    else:
        table = defaultdict(list)
        for r in right.rows:
            table[tuple(r[i] for i in ri)].append(tuple(r[i] for i in ei))
        for l in left.rows:
            for tail in table.get(tuple(l[i] for i in li), ()):
                rows.add(l + tail)
    return BindingTable(header, rows)


def semijoin(table: BindingTable, keys: set[tuple], on: Sequence[str]) -> BindingTable:
    """Rows of ``table`` whose ``on`` columns appear in ``keys``."""
    idx = [table.header.index(v) for v in on]
    return BindingTable(table.header, {r for r in table.rows if tuple(r[i] for i in idx) in keys})
