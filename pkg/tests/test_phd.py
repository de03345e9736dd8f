import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from oracle import brute_force

from adaptrdf import LocalCluster, parse_query
from adaptrdf.datasets import ACADEMIC, random_graph, random_query
from adaptrdf.master import WorkerError
from adaptrdf.planner import OUT, check_parallel_eligibility
from adaptrdf.worker import Worker

PATH = "SELECT ?s WHERE { ?d subOrgOf ?u . ?s memberOf ?d }"


def expected_edge_union(triples, qi):
    """Per index edge, every triple a from-scratch redistribution must replicate somewhere."""
    out = {}
    for e in sorted(qi.edges.values(), key=lambda e: e.level):
        pat = tuple(e.pattern)
        rows = brute_force(triples, [pat], [x for x in pat if x.startswith("?")])
        matches = {t for t in set(triples) if all(x.startswith("?") or x == y for x, y in zip(pat, t))}
        assert len(rows) <= len(matches)
        if e.parent_id is not None:
            parent_vals = {t[out_col(qi.edges[e.parent_id])] for t in out[e.parent_id]}
            matches = {t for t in matches if t[e.parent_column] in parent_vals}
        out[e.id] = matches
    return out


def out_col(edge):
    return edge.child_column


def check_laws(cluster):
    """Placement, propagation and coverage laws of the replica index."""
    m = cluster.master
    data = set().union(*cluster.main_contents())
    expect = expected_edge_union(data, m.qi)
    shapes = cluster.replica_shapes()
    assert all(s == m.qi.shape() for s in shapes)
    for e in m.qi.edges.values():
        path = m.qi.path(e.id)
        union = set()
        for w, contents in enumerate(cluster.replica_contents()):
            got = contents.get(path, set())
            union |= got
            for t in got:
                if e.parent_id is None:
                    assert cluster.placement.worker_for(t[e.parent_column]) == w
                else:
                    parent = contents[m.qi.path(e.parent_id)]
                    assert t[e.parent_column] in {p[out_col(m.qi.edges[e.parent_id])] for p in parent}
        assert union == expect[e.id]


def test_path_redistribution_obeys_laws():
    with LocalCluster(2, pins={"Stanford*": 0, "MIT*": 1}) as c:
        c.master.load(ACADEMIC)
        out = c.master.redistribute(parse_query(PATH), core="?u")
        assert len(out.new_edges) == 2 and out.moved == 7
        check_laws(c)


def test_redistribution_is_idempotent():
    with LocalCluster(3) as c:
        c.master.load(ACADEMIC)
        c.master.redistribute(parse_query(PATH))
        before = c.replica_contents()
        again = c.master.redistribute(parse_query(PATH))
        assert again.new_edges == [] and again.moved == 0
        assert c.replica_contents() == before


def test_shared_prefix_is_reused_and_left_untouched():
    with LocalCluster(2) as c:
        c.master.load(ACADEMIC)
        c.master.redistribute(parse_query(PATH), core="?u")
        before = c.replica_contents()
        out = c.master.redistribute(parse_query("SELECT ?d WHERE { ?d subOrgOf ?u . ?d type department }"), core="?u")
        assert [(e.predicate, e.direction) for e in out.new_edges] == [("type", OUT)]
        after = c.replica_contents()
        for w in range(2):
            for path, triples in before[w].items():
                assert after[w][path] == triples
        check_laws(c)


def test_same_subquery_at_two_levels_gets_two_modules():
    with LocalCluster(2) as c:
        m = c.master
        m.load(ACADEMIC)
        m.redistribute(parse_query(PATH), core="?u")
        m.redistribute(parse_query(PATH), core="?s")
        sub_edges = [e for e in m.qi.edges.values() if e.predicate == "subOrgOf"]
        assert sorted(e.level for e in sub_edges) == [1, 2]
        for w in c.workers:
            a, b = (w.replica.edges[e.id].module for e in sub_edges)
            assert a is not b
        check_laws(c)
        tree = m.plan(parse_query(PATH), core="?s")
        emb = check_parallel_eligibility(tree, m.qi)
        assert {m.qi.edges[emb[i]].level for i in range(2)} == {1, 2}
        assert next(m.qi.edges[emb[i]] for i in range(2) if m.qi.edges[emb[i]].predicate == "subOrgOf").level == 2
        expect = brute_force(ACADEMIC, [tuple(tp) for tp in parse_query(PATH).patterns], ["?s"])
        assert m.execute_parallel(parse_query(PATH), emb, tree).rows == expect


def test_failed_redistribution_rolls_back(monkeypatch):
    def boom(self, op, metas):
        raise RuntimeError("disk full")

    with LocalCluster(2, timeout=2) as c:
        c.master.load(ACADEMIC)
        monkeypatch.setattr(c.workers[1], "redistribute", boom.__get__(c.workers[1], Worker))
        with pytest.raises(WorkerError, match="disk full"):
            c.master.redistribute(parse_query(PATH))
        assert len(c.master.qi) == 0
        assert all(not w.replica.edges for w in c.workers)
        assert c.master.replication_ratio() == 0
        monkeypatch.undo()
        c.master.redistribute(parse_query(PATH))
        check_laws(c)
        assert c.master.query(PATH, adaptive=False).mode == "parallel"


@st.composite
def scenarios(draw):
    rng = random.Random(draw(st.integers(0, 2**32)))
    triples = random_graph(rng, 250, 4, n_vertices=50)
    return triples, [random_query(rng, triples, rng.randint(1, 4)) for _ in range(3)], draw(st.integers(1, 4))


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(scenarios())
def test_laws_hold_for_random_patterns(args):
    triples, queries, n = args
    with LocalCluster(n) as c:
        c.master.load(triples)
        for q in queries:
            c.master.redistribute(q)
        check_laws(c)
        assert c.master.replication_ratio() == pytest.approx(
            sum(len(v) for w in c.replica_contents() for v in w.values()) / len(set(triples))
        )
