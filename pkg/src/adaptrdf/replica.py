"""Worker-side replica index: redistributed tree edges, each with its own storage module."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .planner import IndexEdge
from .store import StorageModule
from .terms import Dictionary


@dataclass
class ReplicaEdge:
    meta: IndexEdge
    pred: int  # predicate id in the owning worker's dictionary
    module: StorageModule = field(default_factory=StorageModule)
    active: bool = False

    @property
    def id(self) -> int:
        return self.meta.id

    def pattern_ids(self, d: Dictionary) -> tuple:
        """Edge subquery with constants interned in ``d`` and wildcards as variables."""
        return tuple(t if t.startswith("?") else d.intern(t) for t in self.meta.pattern)

    def child_values(self) -> Iterable[int]:
        m = self.module
        return m.objects(self.pred) if self.meta.child_column == 2 else m.subjects(self.pred)

    def child_count(self, p: int, value: int) -> int:
        if self.meta.child_column == 2:
            return self.module.count(p, o=value)
        return self.module.count(p, s=value)

    def with_parent_value(self, p: int, value: int) -> list[tuple[int, int, int]]:
        m = self.module
        pairs = m.by_subject(p, value) if self.meta.parent_column == 0 else m.by_object(p, value)
        return [(s, p, o) for s, o in pairs]


@dataclass
class ReplicaIndex:
    edges: dict[int, ReplicaEdge] = field(default_factory=dict)

    def stage(self, metas: Iterable[IndexEdge], d: Dictionary) -> list[ReplicaEdge]:
        """Add edges as inactive until :meth:`commit`."""
        staged = []
        for meta in metas:
            if meta.id in self.edges:
                raise ValueError(f"replica edge {meta.id} already exists")
            edge = self.edges[meta.id] = ReplicaEdge(meta, d.intern(meta.predicate))
            staged.append(edge)
        return staged

    def commit(self) -> None:
        for e in self.edges.values():
            e.active = True

    def abort(self) -> None:
        for eid in [eid for eid, e in self.edges.items() if not e.active]:
            del self.edges[eid]

    def children(self, edge_id: int) -> list[ReplicaEdge]:
        return [e for e in self.edges.values() if e.meta.parent_id == edge_id]

    def active_edges(self) -> list[ReplicaEdge]:
        return sorted((e for e in self.edges.values() if e.active), key=lambda e: (e.meta.level, e.id))

    def dfs(self) -> Iterator[ReplicaEdge]:
        roots = sorted((e for e in self.edges.values() if e.active and e.meta.parent_id is None), key=lambda e: e.id)
        stack = list(reversed(roots))
        while stack:
            e = stack.pop()
            yield e
            stack.extend(sorted((c for c in self.children(e.id) if c.active), key=lambda c: -c.id))

    def total(self) -> int:
        return sum(len(e.module) for e in self.edges.values())

    def shape(self) -> set[tuple]:
        """Label paths of active edges, comparable with the master's query index."""
        out = set()
        for edge in self.edges.values():
            if not edge.active:
                continue
            steps, e = [], edge
            while True:
                steps.append((e.meta.predicate, e.meta.direction, e.meta.child_label))
                if e.meta.parent_id is None:
                    break
                e = self.edges[e.meta.parent_id]
            out.add((e.meta.root_label,) + tuple(reversed(steps)))
        return out

    def contents(self, d: Dictionary) -> dict[tuple, set[tuple[str, str, str]]]:
        """Per label path, the lexical triples stored there."""
        out = {}
        for edge in self.edges.values():
            if edge.active:
                steps, e = [], edge
                while True:
                    steps.append((e.meta.predicate, e.meta.direction, e.meta.child_label))
                    if e.meta.parent_id is None:
                        break
                    e = self.edges[e.meta.parent_id]
                key = (e.meta.root_label,) + tuple(reversed(steps))
                out[key] = {tuple(d.resolve(x) for x in t) for t in edge.module.triples()}
        return out

    def delete(self, t: tuple[int, int, int]) -> int:
        """Remove every instance of ``t`` and cascade to orphaned descendants.

        A descendant triple is orphaned once no triple is left on its parent
        edge with the binding it joined on. Returns the number of triples removed.
        """
        s, p, o = t
        removed = 0
        for edge in list(self.dfs()):
            if edge.pred == p and edge.module.remove(s, p, o):
                removed += 1
                value = (s, p, o)[edge.meta.child_column]
                if edge.child_count(p, value) == 0:
                    removed += self._purge_below(edge, value)
        return removed

    def _purge_below(self, edge: ReplicaEdge, value: int) -> int:
        removed = 0
        for child in self.children(edge.id):
            for s, p, o in child.with_parent_value(child.pred, value):
                child.module.remove(s, p, o)
                removed += 1
                cv = (s, p, o)[child.meta.child_column]
                if child.child_count(p, cv) == 0:
                    removed += self._purge_below(child, cv)
        return removed
