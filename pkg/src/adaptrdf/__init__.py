"""Workload-adaptive distributed RDF store.

Triples are spread over N workers with hash-indexed main indexes. Queries
run as distributed semi-joins until a query template becomes frequent;
then its pattern is redistributed into per-worker replica indexes, and
matching queries run in parallel with no worker-to-worker traffic.
"""

from .adaptivity import AdaptivityConfig, Placement, TemplateTracker, instantiate_template, term_hash
from .bgp import BgpQuery, TriplePattern, canonical_form, derive_template, parse_query, parse_query_file
from .cluster import LocalCluster
from .master import Master, QueryOutcome, ResultSet
from .metrics import MetricsSnapshot, gini
from .planner import QueryIndex, build_redistribution_tree, check_parallel_eligibility, order_joins, plan_tree, select_core
from .stats import GlobalStats, compute_local_stats, effective_scores
from .store import BindingTable, StorageModule, WorkerStore, answer_subquery, local_hash_join
from .terms import Dictionary, Triple, parse_triples, serialize_triples

__all__ = [
    "AdaptivityConfig", "BgpQuery", "BindingTable", "Dictionary", "GlobalStats", "LocalCluster", "Master",
    "MetricsSnapshot", "Placement", "QueryIndex", "QueryOutcome", "ResultSet", "StorageModule", "TemplateTracker",
    "Triple", "TriplePattern", "WorkerStore", "answer_subquery", "build_redistribution_tree", "canonical_form",
    "check_parallel_eligibility", "compute_local_stats", "derive_template", "effective_scores", "gini",
    "instantiate_template", "local_hash_join", "order_joins", "parse_query", "parse_query_file", "parse_triples",
    "plan_tree", "select_core", "serialize_triples", "term_hash",
]
