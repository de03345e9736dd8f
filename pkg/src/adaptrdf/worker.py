"""Worker node: main index, replica index, and the command loop that runs
semi-joins, parallel evaluation, redistribution and updates."""

from __future__ import annotations

import logging
import time
import traceback
from collections import defaultdict
from typing import Iterable

from .adaptivity import Placement
from .bgp import parse_query
from .planner import IndexEdge, order_joins
from .replica import ReplicaEdge, ReplicaIndex
from .stats import compute_local_stats
from .store import (
    BindingTable,
    WorkerStore,
    answer_subquery,
    insert_triple,
    local_hash_join,
    match_pattern,
    semijoin,
)
from .transport import BarrierTimeout, Endpoint
from .wire import MASTER, Message, Tag, msg

log = logging.getLogger(__name__)

SEMIJOIN, PARALLEL = 0, 1
DELETE, INSERT = 0, 1

COMMANDS = frozenset(
    {
        Tag.PEERS,
        Tag.LOAD_TRIPLES,
        Tag.STATS_REQUEST,
        Tag.CARDINALITY_REQUEST,
        Tag.QUERY_BROADCAST,
        Tag.REDIST_BEGIN,
        Tag.REDIST_COMMIT,
        Tag.REDIST_ABORT,
        Tag.UPDATE_BATCH,
        Tag.METRICS_REQUEST,
        Tag.SHUTDOWN,
    }
)


class PeerFailure(RuntimeError):
    """Another worker reported an error for the operation in progress."""


class ReplicaCorruption(RuntimeError):
    pass


class Worker:
    def __init__(self, worker_id: int, n_workers: int, endpoint: Endpoint, placement: Placement, timeout: float = 30.0):
        self.id = worker_id
        self.n = n_workers
        self.ep = endpoint
        self.placement = placement
        self.timeout = timeout
        self.store = WorkerStore()
        self.replica = ReplicaIndex()
        self._op = 0

    @property
    def dict(self):
        return self.store.dict

    # -- plumbing -------------------------------------------------------

    def peers(self) -> range:
        return range(self.n)

    def _gather(self, tag: Tag, op: int, step: int | None = None) -> list[Message]:
        """One ``tag`` message from every worker; a peer's error ACK aborts the wait."""

        def pred(m: Message) -> bool:
            if m.body.get("op") != op:
                return False
            if m.tag == Tag.ACK:
                return m.status != 0
            return m.tag == tag and (step is None or m.step == step)

        deadline = time.monotonic() + self.timeout
        msgs = []
        while len(msgs) < self.n:
            try:
                m = self.ep.recv(pred, max(0.0, deadline - time.monotonic()))
            except BarrierTimeout:
                raise BarrierTimeout(f"barrier got {len(msgs)} of {self.n} {tag.name} messages") from None
            if m.tag == Tag.ACK:
                raise PeerFailure(f"worker {m.sender} failed")
            msgs.append(m)
        return sorted(msgs, key=lambda m: m.sender)

    def _lex(self, row: Iterable[int]) -> tuple[str, ...]:
        r = self.dict.resolve
        return tuple(r(x) for x in row)

    def _ids(self, row: Iterable[str]) -> tuple[int, ...]:
        i = self.dict.intern
        return tuple(i(x) for x in row)

    def _pattern_ids(self, tp) -> tuple:
        # unknown constants stay None and match nothing
        return tuple(t if t.startswith("?") else self.dict.lookup(t) for t in tp)

    def _ack_msg(self, op: int, status: int, moved: int, text: str) -> Message:
        return msg(Tag.ACK, self.id, op=op, status=status, main_count=len(self.store), replica_count=self.replica.total(), moved=moved, text=text)

    def _ack(self, op: int, status: int = 0, moved: int = 0, text: str = "") -> None:
        self.ep.send(MASTER, self._ack_msg(op, status, moved, text))

    # -- command loop ---------------------------------------------------

    def serve(self) -> None:
        while True:
            m = self.ep.recv(lambda m: m.tag in COMMANDS)
            if m.tag == Tag.SHUTDOWN:
                return
            op = m.body.get("op")
            if op is not None:
                self._op = op
                self.ep.drop_stash(lambda s: s.body.get("op", op) >= op)
            try:
                self.handle(m)
            except Exception as exc:  # reported to the master, loop keeps running
                log.error("worker %d failed on %s: %s", self.id, m.tag.name, exc)
                text = f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"
                self._ack(op or 0, status=1, text=text)
                if not isinstance(exc, PeerFailure):
                    # peers blocked in a gather for this op stop waiting
                    for w in self.peers():
                        if w != self.id:
                            self.ep.send(w, self._ack_msg(op or 0, 1, 0, text))

    def handle(self, m: Message) -> None:
        t = m.tag
        if t == Tag.PEERS:
            for pid, host, port in m.peers:
                self.ep.set_address(pid, host, port)
        elif t == Tag.LOAD_TRIPLES:
            for s, p, o in m.triples:
                self.store.insert(s, p, o)
            self.ep.send(MASTER, msg(Tag.LOAD_DONE, self.id, op=m.op, main_count=len(self.store)))
        elif t == Tag.STATS_REQUEST:
            stats = [tuple(st) for st in compute_local_stats(self.store)]
            self.ep.send(MASTER, msg(Tag.STATS_REPORT, self.id, op=m.op, stats=stats))
        elif t == Tag.CARDINALITY_REQUEST:
            counts = [self.cardinality(tp) for tp in m.patterns]
            self.ep.send(MASTER, msg(Tag.CARDINALITY_REPORT, self.id, op=m.op, counts=counts))
        elif t == Tag.QUERY_BROADCAST:
            if m.mode == PARALLEL:
                table = self.evaluate_parallel(m.query, m.embedding)
            else:
                table = self.evaluate_semijoin(m.op, m.query, m.order)
            rows = [self._lex(r) for r in table.rows]
            self.ep.send(MASTER, msg(Tag.PARTIAL_RESULT, self.id, op=m.op, header=list(table.header), rows=rows))
        elif t == Tag.REDIST_BEGIN:
            moved = self.redistribute(m.op, [IndexEdge(id_, None if parent < 0 else parent, root, plabel, pred, direction, child, level)
                                             for id_, parent, root, plabel, pred, direction, child, level in m.edges])
            self._ack(m.op, moved=moved)
        elif t == Tag.REDIST_COMMIT:
            self.replica.commit()
            self._ack(m.op)
        elif t == Tag.REDIST_ABORT:
            self.replica.abort()
            self._ack(m.op)
        elif t == Tag.UPDATE_BATCH:
            if m.kind == DELETE:
                changed = self.apply_deletes(m.triples)
            else:
                changed = self.apply_inserts(m.op, m.triples, m.assigned)
            self._ack(m.op, moved=changed)
        elif t == Tag.METRICS_REQUEST:
            counters = [(int(tag), c.loop_msgs, c.loop_bytes, c.remote_msgs, c.remote_bytes) for tag, c in self.ep.metrics.snapshot().items()]
            self.ep.send(
                MASTER,
                msg(Tag.METRICS_REPORT, self.id, op=m.op, counters=counters, main_count=len(self.store), replica_count=self.replica.total()),
            )

    # -- queries ----------------------------------------------------------

    def cardinality(self, tp) -> int:
        s, p, o = self._pattern_ids(tp)
        main = self.store.main
        if isinstance(p, str):
            return len(main)
        if p is None or s is None or o is None:
            return 0
        return main.count(p, None if isinstance(s, str) else s, None if isinstance(o, str) else o)

    def evaluate_semijoin(self, op: int, text: str, order: list[int]) -> BindingTable:
        """Fold of distributed semi-join steps over ``order``; returns this worker's share."""
        q = parse_query(text)
        pats = [self._pattern_ids(q.patterns[i]) for i in order]
        prefix = match_pattern(self.store.main, pats[0])
        for step, tp in enumerate(pats[1:], start=1):
            prefix = self.semijoin_step(op, step, prefix, tp)
        return prefix.project(q.projection)

    def semijoin_step(self, op: int, step: int, prefix: BindingTable, tp) -> BindingTable:
        """One distributed semi-join between the local prefix and pattern ``tp``.

        Projection of the join columns goes to every worker (self included);
        each worker returns the local bindings of ``tp`` that match it.
        """
        local = match_pattern(self.store.main, tp)
        on = tuple(v for v in prefix.header if v in local.header)
        proj = {self._lex(r) for r in prefix.project(on).rows}
        out = msg(Tag.SUBQUERY_PROJECTION, self.id, op=op, step=step, groups=[(-1, sorted(proj))])
        self.ep.broadcast(out, self.peers())
        lookup = self.dict.lookup
        for m in self._gather(Tag.SUBQUERY_PROJECTION, op, step):
            keys = set()
            for row in m.groups[0][1]:
                ids = tuple(lookup(x) for x in row)
                if None not in ids:
                    keys.add(ids)
            cand = semijoin(local, keys, on)
            rows = [self._lex(r) for r in cand.rows]
            self.ep.send(m.sender, msg(Tag.CANDIDATE_ROWS, self.id, op=op, step=step, groups=[(-1, rows)]))
        received = BindingTable(local.header)
        for m in self._gather(Tag.CANDIDATE_ROWS, op, step):
            received.rows.update(self._ids(r) for r in m.groups[0][1])
        return local_hash_join(prefix, received, on)

    def evaluate_parallel(self, text: str, embedding: list[int]) -> BindingTable:
        """Answer entirely from the replica index; no worker-to-worker traffic."""
        q = parse_query(text)
        tables = []
        for tp, eid in zip(q.patterns, embedding):
            edge = self.replica.edges.get(eid)
            if edge is None or not edge.active:
                raise ReplicaCorruption(f"embedding references missing replica edge {eid}")
            tables.append(answer_subquery(edge.module, self._pattern_ids(tp)))
        plan = order_joins(q, [len(t) for t in tables])
        acc = tables[plan.order[0]]
        for i, on in zip(plan.order[1:], plan.join_vars[1:]):
            acc = local_hash_join(acc, tables[i], on)
        return acc.project(q.projection)

    # -- redistribution -----------------------------------------------------

    def _candidates(self, edge: ReplicaEdge, parent_values: Iterable[int] | None = None) -> list[tuple[int, int, int]]:
        """Main-index triples matching the edge subquery, optionally restricted on the parent column."""
        s, p, o = edge.pattern_ids(self.dict)
        main = self.store.main
        s_c = None if isinstance(s, str) else s
        o_c = None if isinstance(o, str) else o
        if parent_values is None:
            return [(a, p, b) for a, b in main.match(s_c, p, o_c)]
        out = []
        parent_is_subject = edge.meta.parent_column == 0
        for v in parent_values:
            if parent_is_subject:
                if s_c is not None and s_c != v:
                    continue
                pairs = main.match(v, p, o_c)
            else:
                if o_c is not None and o_c != v:
                    continue
                pairs = main.match(s_c, p, v)
            out.extend((a, p, b) for a, b in pairs)
        return out

    def redistribute(self, op: int, metas: list[IndexEdge]) -> int:
        """Propagating hash distribution of the new edges, level by level.

        Level 1 triples go to ``H(root-side term) mod N``; deeper triples go
        to every worker whose parent-edge data shares the joining binding.
        """
        staged = self.replica.stage(metas, self.dict)
        moved = 0
        for level in sorted({e.meta.level for e in staged}):
            edges = [e for e in staged if e.meta.level == level]
            outgoing: dict[int, list] = defaultdict(list)
            if level == 1:
                for e in edges:
                    buckets: dict[int, list] = defaultdict(list)
                    col = e.meta.parent_column
                    for t in self._candidates(e):
                        lex = self._lex(t)
                        buckets[self.placement.worker_for(lex[col])].append(lex)
                    for w, rows in buckets.items():
                        outgoing[w].append((e.id, rows))
            else:
                groups = []
                for e in edges:
                    parent = self.replica.edges[e.meta.parent_id]
                    groups.append((e.id, [(self.dict.resolve(v),) for v in parent.child_values()]))
                self.ep.broadcast(msg(Tag.SUBQUERY_PROJECTION, self.id, op=op, step=level, groups=groups), self.peers())
                for m in self._gather(Tag.SUBQUERY_PROJECTION, op, level):
                    for eid, values in m.groups:
                        ids = [self.dict.lookup(v[0]) for v in values]
                        cands = self._candidates(self.replica.edges[eid], [i for i in ids if i is not None])
                        if cands:
                            outgoing[m.sender].append((eid, [self._lex(t) for t in cands]))
            for w in self.peers():
                self.ep.send(w, msg(Tag.REDIST_TRIPLES, self.id, op=op, step=level, groups=outgoing.get(w, [])))
            for m in self._gather(Tag.REDIST_TRIPLES, op, level):
                for eid, rows in m.groups:
                    module = self.replica.edges[eid].module
                    for row in rows:
                        moved += module.add(*self._ids(row))
        return moved

    # -- updates ------------------------------------------------------------

    def apply_deletes(self, triples: list[tuple[str, str, str]]) -> int:
        """Delete from the main index and the replica index; never communicates."""
        changed = 0
        for lex in triples:
            ids = tuple(self.dict.lookup(x) for x in lex)
            if None in ids:
                continue
            changed += self.store.delete(*lex)
            changed += self.replica.delete(ids)
        return changed

    def _matches(self, edge: ReplicaEdge, t: tuple[int, int, int]) -> bool:
        if edge.pred != t[1]:
            return False
        pat = edge.pattern_ids(self.dict)
        return all(isinstance(c, str) or c == x for c, x in ((pat[0], t[0]), (pat[2], t[2])))

    def apply_inserts(self, op: int, triples: list[tuple[str, str, str]], assigned: list[int]) -> int:
        """Insert the batch, then restore replica consistency.

        Every worker sees the whole batch and keeps the triples that belong on
        it. A binding new to an edge triggers validation rounds that pull the
        matching descendant triples from every worker's main index.
        """
        for lex, w in zip(triples, assigned):
            if w == self.id:
                self.store.insert(*lex)
        changed = 0
        pending: dict[int, set[int]] = defaultdict(set)  # edge id -> new child bindings
        edges = self.replica.active_edges()
        for lex in triples:
            t = self._ids(lex)
            for e in edges:
                if not self._matches(e, t):
                    continue
                if e.meta.parent_id is None:
                    if self.placement.worker_for(lex[e.meta.parent_column]) != self.id:
                        continue
                else:
                    parent = self.replica.edges[e.meta.parent_id]
                    if parent.child_count(parent.pred, t[e.meta.parent_column]) == 0:
                        continue
                changed += self._add_replica(e, t, pending)
        step = 0
        while True:
            step += 1
            groups = []
            for eid, values in sorted(pending.items()):
                vals = [(self.dict.resolve(v),) for v in sorted(values)]
                for child in self.replica.children(eid):
                    if child.active:
                        groups.append((child.id, vals))
            pending = defaultdict(set)
            self.ep.broadcast(msg(Tag.VALIDATION_REQUEST, self.id, op=op, step=step, groups=groups), self.peers())
            requests = self._gather(Tag.VALIDATION_REQUEST, op, step)
            for m in requests:
                reply = []
                for eid, values in m.groups:
                    ids = [self.dict.lookup(v[0]) for v in values]
                    cands = self._candidates(self.replica.edges[eid], [i for i in ids if i is not None])
                    if cands:
                        reply.append((eid, [self._lex(t) for t in cands]))
                self.ep.send(m.sender, msg(Tag.VALIDATION_ROWS, self.id, op=op, step=step, groups=reply))
            for m in self._gather(Tag.VALIDATION_ROWS, op, step):
                for eid, rows in m.groups:
                    for row in rows:
                        changed += self._add_replica(self.replica.edges[eid], self._ids(row), pending)
            if all(not m.groups for m in requests):
                return changed

    def _add_replica(self, edge: ReplicaEdge, t: tuple[int, int, int], pending: dict[int, set[int]]) -> int:
        value = t[edge.meta.child_column]
        fresh = edge.child_count(edge.pred, value) == 0
        if not edge.module.add(*t):
            return 0
        if fresh and self.replica.children(edge.id):
            pending[edge.id].add(value)
        return 1
