"""Command layer shared by the CLI and the TCP master: text in, structured results out."""

from __future__ import annotations

import io
import json
import logging

from .bgp import parse_query_file
from .master import Master
from .metrics import diff
from .terms import ParseError, parse_triple_line, parse_triples
from .transport import Endpoint
from .wire import Tag, msg

log = logging.getLogger(__name__)

CSV_COLUMNS = ("query_seq", "mode", "wall_ms", "cumulative_ms", "replication_ratio", "remote_bytes")


def parse_update_lines(text: str) -> list[tuple[str, tuple[str, str, str]]]:
    """Lines ``+ s p o .`` / ``- s p o .``; blank and ``#`` lines are skipped."""
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sign, rest = line[0], line[1:]
        if sign not in "+-":
            raise ParseError("update line must start with + or -", lineno)
        t = parse_triple_line(rest, lineno)
        if t is None:
            raise ParseError("update line has no triple", lineno)
        ops.append((sign, tuple(t)))
    return ops


def parse_assignment(text: str) -> list[int]:
    return [int(x) for x in text.split()]


def _stat_rows(stats) -> list[tuple]:
    rows = []
    for p in sorted(stats.raw):
        ps, po = stats.raw[p]
        eps, epo = stats.scores(p)
        rows.append((p, ps, po, eps, epo))
    return rows


class Session:
    """Runs named commands against a :class:`Master`."""

    def __init__(self, master: Master):
        self.master = master

    def handle(self, command: str, args: dict) -> dict:
        fn = getattr(self, f"cmd_{command}", None)
        if fn is None:
            raise ValueError(f"unknown command {command!r}")
        return fn(**args)

    def cmd_load(self, triples: str, assignment: str | None = None) -> dict:
        data = parse_triples(io.StringIO(triples))
        assign = parse_assignment(assignment) if assignment else None
        if assign is not None and len(assign) != len(data):
            raise ValueError(f"assignment has {len(assign)} entries for {len(data)} triples")
        stats = self.master.load(data, assign)
        return {"triples": len(data), "workers": self.master.n, "main_counts": self.master.main_counts, "stats": _stat_rows(stats)}

    def cmd_stats(self) -> dict:
        """Recompute global statistics from the workers' current main indexes."""
        stats = self.master.collect_stats()
        m = self.master
        return {"triples": m.data_size(), "workers": m.n, "main_counts": m.main_counts, "stats": _stat_rows(stats)}

    def cmd_query(self, queries: str) -> dict:
        out = []
        for q in parse_query_file(queries):
            res = self.master.query(q)
            out.append({"mode": res.mode, "wall_ms": res.wall_ms, "text": res.result.to_text(), "rows": len(res.result)})
        return {"results": out}

    def cmd_workload(self, queries: str) -> dict:
        rows = []
        cumulative = 0.0
        before = self.master.metrics()
        for i, q in enumerate(parse_query_file(queries), 1):
            res = self.master.query(q)
            after = self.master.metrics()
            remote = sum(c.remote_bytes for c in diff(after, before).values())
            before = after
            cumulative += res.wall_ms
            rows.append((i, res.mode, round(res.wall_ms, 3), round(cumulative, 3), round(self.master.replication_ratio(), 6), remote))
        return {"columns": CSV_COLUMNS, "rows": rows}

    def cmd_update(self, updates: str) -> dict:
        ops = parse_update_lines(updates)
        changed = self.master.apply_updates(ops)
        return {
            "inserted": sum(1 for s, _ in ops if s == "+"),
            "deleted": sum(1 for s, _ in ops if s == "-"),
            "changed": changed,
            "replication_ratio": self.master.replication_ratio(),
        }

    def cmd_metrics(self) -> dict:
        return {"text": self.master.metrics().to_text()}


def serve_master(master: Master, endpoint: Endpoint) -> None:
    """Answer CLIENT_REQUEST messages until a ``shutdown`` command arrives."""
    session = Session(master)
    while True:
        m = endpoint.recv(lambda m: m.tag == Tag.CLIENT_REQUEST)
        if m.command == "shutdown":
            endpoint.send(m.sender, msg(Tag.CLIENT_REPLY, endpoint.node_id, op=m.op, status=0, output="{}"))
            master.shutdown()
            return
        try:
            result = session.handle(m.command, json.loads(m.args) if m.args else {})
            status, output = 0, json.dumps(result)
        except Exception as exc:
            log.exception("command %s failed", m.command)
            status, output = 1, json.dumps({"error": f"{type(exc).__name__}: {exc}"})
        endpoint.send(m.sender, msg(Tag.CLIENT_REPLY, endpoint.node_id, op=m.op, status=status, output=output))
