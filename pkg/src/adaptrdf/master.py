"""Master coordinator: loading, statistics, adaptive query execution,
redistribution and update batches."""

from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .adaptivity import AdaptivityConfig, TemplateTracker
from .bgp import BgpQuery, is_var, parse_query
from .metrics import MetricsSnapshot, build_snapshot
from .planner import (
    IndexEdge,
    NoCoreError,
    QueryIndex,
    RedistTree,
    check_parallel_eligibility,
    index_label,
    order_joins,
    plan_tree,
)
from .stats import TYPE_PREDICATES, GlobalStats, PredicateStats, aggregate_global, effective_scores
from .transport import Endpoint, TagCounter
from .wire import Message, Tag, msg
from .worker import DELETE, INSERT, PARALLEL, SEMIJOIN

log = logging.getLogger(__name__)

SEMIJOIN_MODE, PARALLEL_MODE = "semijoin", "parallel"


class WorkerError(RuntimeError):
    """A worker reported a failure for the current operation."""


class PartitionOverlap(AssertionError):
    """Two workers returned the same full row in parallel mode."""


@dataclass
class ResultSet:
    header: tuple[str, ...]
    rows: set[tuple[str, ...]] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.rows)

    def to_text(self) -> str:
        lines = ["\t".join(self.header)]
        lines.extend("\t".join(r) for r in sorted(self.rows))
        return "\n".join(lines) + "\n"


@dataclass
class QueryOutcome:
    result: ResultSet
    mode: str
    wall_ms: float
    redistributed: int = 0  # triples moved by a redistribution this query triggered


@dataclass
class RedistOutcome:
    new_edges: list[IndexEdge]
    moved: int


class Master:
    def __init__(
        self,
        endpoint: Endpoint,
        n_workers: int,
        config: AdaptivityConfig | None = None,
        seed: int = 0,
        timeout: float = 60.0,
        type_predicates: Sequence[str] = TYPE_PREDICATES,
    ):
        self.ep = endpoint
        self.n = n_workers
        self.config = config or AdaptivityConfig()
        self.timeout = timeout
        self.type_predicates = tuple(type_predicates)
        self.rng = random.Random(seed)
        self.qi = QueryIndex()
        self.tracker = TemplateTracker(self.config, self.replication_ratio)
        self.stats: GlobalStats | None = None
        self.main_counts = [0] * n_workers
        self.replica_counts = [0] * n_workers
        self._op = 0

    # -- plumbing -------------------------------------------------------

    def workers(self) -> range:
        return range(self.n)

    def _next_op(self) -> int:
        self._op += 1
        op = self._op
        self.ep.drop_stash(lambda m: m.body.get("op", op) >= op)
        return op

    def _collect(self, op: int, tag: Tag) -> list[Message]:
        """One reply per worker: ``tag`` or an error ACK. Raises on any error."""
        msgs = self.ep.barrier(lambda m: m.tag in (tag, Tag.ACK) and m.body.get("op") == op, self.n, self.timeout)
        msgs.sort(key=lambda m: m.sender)
        failed = [m for m in msgs if m.tag == Tag.ACK and m.status != 0]
        if failed:
            raise WorkerError("; ".join(f"worker {m.sender}: {m.text.splitlines()[0] if m.text else 'failed'}" for m in failed))
        for m in msgs:
            if m.tag == Tag.ACK:
                self.main_counts[m.sender] = m.main_count
                self.replica_counts[m.sender] = m.replica_count
        return msgs

    def _round(self, tag: Tag, reply: Tag, **body) -> list[Message]:
        op = self._next_op()
        self.ep.broadcast(msg(tag, 0, op=op, **body), self.workers())
        return self._collect(op, reply)

    # -- loading and statistics -------------------------------------------

    def load(self, triples: Iterable[tuple[str, str, str]], assignment: Sequence[int] | None = None) -> GlobalStats:
        """Partition triples (round-robin unless ``assignment`` is given) and collect statistics."""
        parts: list[list[tuple[str, str, str]]] = [[] for _ in self.workers()]
        for i, t in enumerate(triples):
            w = i % self.n if assignment is None else assignment[i]
            if not 0 <= w < self.n:
                raise ValueError(f"assignment {w} out of range for {self.n} workers")
            parts[w].append(tuple(t))
        op = self._next_op()
        for w, rows in enumerate(parts):
            self.ep.send(w, msg(Tag.LOAD_TRIPLES, 0, op=op, triples=rows))
        for m in self._collect(op, Tag.LOAD_DONE):
            self.main_counts[m.sender] = m.main_count
        return self.collect_stats()

    def collect_stats(self) -> GlobalStats:
        reports = self._round(Tag.STATS_REQUEST, Tag.STATS_REPORT)
        raw = aggregate_global([PredicateStats(*r) for r in m.stats] for m in reports)
        self.stats = effective_scores(raw, self.type_predicates)
        return self.stats

    def data_size(self) -> int:
        return sum(self.main_counts)

    def replication_ratio(self) -> float:
        d = self.data_size()
        return sum(self.replica_counts) / d if d else 0.0

    # -- queries ----------------------------------------------------------

    def query(self, query: BgpQuery | str, adaptive: bool = True) -> QueryOutcome:
        """Record, maybe redistribute, then run in parallel mode if the index covers the query."""
        q = parse_query(query) if isinstance(query, str) else query
        start = time.perf_counter()
        moved = 0
        if adaptive:
            trigger = self.tracker.record_query(q)
            if trigger is not None:
                try:
                    moved = self.redistribute(trigger.pattern).moved
                except NoCoreError:
                    log.info("triggered pattern has no core; not redistributed")
        tree = self.plan(q)
        embedding = None if tree is None else check_parallel_eligibility(tree, self.qi)
        if embedding is not None:
            result, mode = self.execute_parallel(q, embedding, tree), PARALLEL_MODE
        else:
            result, mode = self.execute_distributed(q), SEMIJOIN_MODE
        return QueryOutcome(result, mode, (time.perf_counter() - start) * 1000.0, moved)

    def plan(self, q: BgpQuery, core: str | None = None) -> RedistTree | None:
        if any(is_var(tp.p) for tp in q.patterns):
            return None
        try:
            return plan_tree(q, self._stats(), core)
        except NoCoreError:
            return None

    def _stats(self) -> GlobalStats:
        if self.stats is None:
            self.collect_stats()
        return self.stats

    def cardinalities(self, q: BgpQuery) -> list[int]:
        reports = self._round(Tag.CARDINALITY_REQUEST, Tag.CARDINALITY_REPORT, patterns=[tuple(tp) for tp in q.patterns])
        return [sum(col) for col in zip(*(m.counts for m in reports))]

    def execute_distributed(self, q: BgpQuery) -> ResultSet:
        plan = order_joins(q, self.cardinalities(q))
        parts = self._round(Tag.QUERY_BROADCAST, Tag.PARTIAL_RESULT, mode=SEMIJOIN, query=q.to_text(compact=True), order=plan.order, embedding=[])
        return self._union(q, parts, check_root=None)

    def execute_parallel(self, q: BgpQuery, embedding: dict[int, int], tree: RedistTree | None = None) -> ResultSet:
        emb = [embedding[i] for i in range(len(q.patterns))]
        parts = self._round(Tag.QUERY_BROADCAST, Tag.PARTIAL_RESULT, mode=PARALLEL, query=q.to_text(compact=True), order=[], embedding=emb)
        root = tree.root if tree is not None else None
        return self._union(q, parts, check_root=root if root in q.projection else None)

    def _union(self, q: BgpQuery, parts: list[Message], check_root: str | None) -> ResultSet:
        out = ResultSet(tuple(q.projection))
        for m in parts:
            rows = [tuple(r) for r in m.rows]
            if check_root is not None and not out.rows.isdisjoint(rows):
                raise PartitionOverlap(f"worker {m.sender} returned rows already produced by another worker")
            out.rows.update(rows)
        return out

    # -- redistribution -------------------------------------------------------

    def redistribute(self, pattern: BgpQuery, core: str | None = None) -> RedistOutcome:
        tree = self.plan(pattern, core)
        if tree is None:
            raise NoCoreError("pattern cannot be planned for redistribution")
        return self.redistribute_tree(tree)

    def redistribute_tree(self, tree: RedistTree) -> RedistOutcome:
        """Ship the edges of ``tree`` missing from the query index; all-or-nothing."""
        root_label = index_label(tree.root)
        mapped: dict[int, IndexEdge] = {}
        new: list[IndexEdge] = []
        staged: dict[tuple, IndexEdge] = {}
        for te in sorted(tree.edges, key=lambda e: e.level):
            parent = None if te.parent is None else mapped[id(te.parent)]
            child = index_label(te.child_vertex)
            found = self.qi.find(None if parent is None else parent.id, root_label, te.predicate, te.direction, child)
            if found is None:
                found = self.qi.new_edge(parent, root_label, te.predicate, te.direction, child)
                # two tree edges with the same label path share one index edge
                found = staged.setdefault(found.key(), found)
                if found not in new:
                    new.append(found)
            mapped[id(te)] = found
        if not new:
            return RedistOutcome([], 0)
        records = [
            (e.id, -1 if e.parent_id is None else e.parent_id, e.root_label, e.parent_label, e.predicate, e.direction, e.child_label, e.level)
            for e in new
        ]
        try:
            acks = self._round(Tag.REDIST_BEGIN, Tag.ACK, edges=records)
        except Exception:
            self._round(Tag.REDIST_ABORT, Tag.ACK)
            raise
        self._round(Tag.REDIST_COMMIT, Tag.ACK)
        for e in new:
            self.qi.add(e)
        return RedistOutcome(new, sum(m.moved for m in acks))

    # -- updates ---------------------------------------------------------------

    def insert(self, triples: Sequence[tuple[str, str, str]]) -> int:
        """Each triple's main-index owner is drawn from the seeded RNG."""
        rows = [tuple(t) for t in triples]
        assigned = [self.rng.randrange(self.n) for _ in rows]
        acks = self._round(Tag.UPDATE_BATCH, Tag.ACK, kind=INSERT, triples=rows, assigned=assigned)
        return sum(m.moved for m in acks)

    def delete(self, triples: Sequence[tuple[str, str, str]]) -> int:
        rows = [tuple(t) for t in triples]
        acks = self._round(Tag.UPDATE_BATCH, Tag.ACK, kind=DELETE, triples=rows, assigned=[])
        return sum(m.moved for m in acks)

    def apply_updates(self, ops: Iterable[tuple[str, tuple[str, str, str]]]) -> int:
        """Apply ``("+"|"-", triple)`` pairs in order, batching runs of the same sign."""
        changed = 0
        batch: list[tuple[str, str, str]] = []
        sign = None
        for s, t in ops:
            if s not in "+-" or len(s) != 1:
                raise ValueError(f"bad update sign {s!r}")
            if s != sign and batch:
                changed += (self.insert if sign == "+" else self.delete)(batch)
                batch = []
            sign = s
            batch.append(t)
        if batch:
            changed += (self.insert if sign == "+" else self.delete)(batch)
        return changed

    # -- metrics and lifecycle -------------------------------------------------

    def metrics(self) -> MetricsSnapshot:
        reports = self._round(Tag.METRICS_REQUEST, Tag.METRICS_REPORT)
        per_node: dict[int, dict[Tag, TagCounter]] = {}
        for m in reports:
            per_node[m.sender] = {Tag(t): TagCounter(a, b, c, d) for t, a, b, c, d in m.counters}
            self.main_counts[m.sender] = m.main_count
            self.replica_counts[m.sender] = m.replica_count
        per_node[self.ep.node_id] = self.ep.metrics.snapshot()
        return build_snapshot(per_node, list(self.main_counts), list(self.replica_counts))

    def shutdown(self) -> None:
        for w in self.workers():
            try:
                self.ep.send(w, msg(Tag.SHUTDOWN, 0))
            except OSError:
                pass
