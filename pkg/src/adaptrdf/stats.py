"""Predicate subject/object scores, their aggregation, and vertex scoring."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .bgp import QueryGraph
from .store import WorkerStore

NEG_INF = float("-inf")
TYPE_PREDICATES = ("type", "rdf:type", "<http://www.w3.org/1999/02/22-rdf-syntax-ns#type>")


class PredicateStats(NamedTuple):
    predicate: str
    ps: float
    po: float


@dataclass
class GlobalStats:
    raw: dict[str, tuple[float, float]] = field(default_factory=dict)
    effective: dict[str, tuple[float, float]] = field(default_factory=dict)
    mean_s: float = 0.0
    std_s: float = 0.0
    mean_o: float = 0.0
    std_o: float = 0.0

    def scores(self, predicate: str) -> tuple[float, float]:
        table = self.effective or self.raw
        # predicates with no data anywhere carry no connectivity signal
        return table.get(predicate, (0.0, 0.0))


def compute_local_stats(store: WorkerStore) -> list[PredicateStats]:
    """Mean degree of the distinct subjects / objects of each local predicate."""
    m, deg, d = store.main, store.degree, store.dict
    out = []
    for p in m.predicates():
        subs = list(m.subjects(p))
        objs = list(m.objects(p))
        ps = sum(deg[s] for s in subs) / len(subs)
        po = sum(deg[o] for o in objs) / len(objs)
        out.append(PredicateStats(d.resolve(p), ps, po))
    return out


def aggregate_global(reports: Iterable[Sequence[PredicateStats]]) -> GlobalStats:
    """Unweighted mean over the workers that reported each predicate."""
    acc: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for report in reports:
        for st in report:
            acc[st.predicate].append((st.ps, st.po))
    raw = {
        p: (statistics.fmean(v[0] for v in vals), statistics.fmean(v[1] for v in vals))
        for p, vals in acc.items()
    }
    return GlobalStats(raw=raw)


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    if len(values) < 2:
        return values[0], 0.0
    return statistics.fmean(values), statistics.pstdev(values)


def effective_scores(stats: GlobalStats, type_predicates: Iterable[str] = TYPE_PREDICATES) -> GlobalStats:
    """Mask rdf:type and high outliers (> mean + 3 population std) with -inf.

    Mean and deviation are taken over the finite raw scores, so the result is
    idempotent when fed back in.
    """
    raw = {p: v for p, v in stats.raw.items() if all(math.isfinite(x) for x in v)}
    mean_s, std_s = _mean_std([v[0] for v in raw.values()])
    mean_o, std_o = _mean_std([v[1] for v in raw.values()])
    types = set(type_predicates)
    eff = {}
    for p, (ps, po) in stats.raw.items():
        masked = (
            p in types
            or not (math.isfinite(ps) and math.isfinite(po))
            or ps > mean_s + 3 * std_s
            or po > mean_o + 3 * std_o
        )
        eff[p] = (NEG_INF, NEG_INF) if masked else (ps, po)
    return GlobalStats(dict(stats.raw), eff, mean_s, std_s, mean_o, std_o)


def vertex_score(graph: QueryGraph, vertex: str, stats: GlobalStats) -> float:
    """max of pS over outgoing predicates and pO over incoming predicates."""
    scores = [stats.scores(p)[0] for p in graph.out_predicates(vertex)]
    scores += [stats.scores(p)[1] for p in graph.in_predicates(vertex)]
    return max(scores, default=NEG_INF)


def score_graph(graph: QueryGraph, stats: GlobalStats) -> QueryGraph:
    graph.scores = {v: vertex_score(graph, v, stats) for v in graph.vertices}
    return graph


def stats_from_mapping(scores: Mapping[str, tuple[float, float]], type_predicates=TYPE_PREDICATES) -> GlobalStats:
    """Build (and filter) global stats from a predicate -> (pS, pO) table."""
    return effective_scores(GlobalStats(raw=dict(scores)), type_predicates)
