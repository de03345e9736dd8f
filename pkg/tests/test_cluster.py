import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptrdf import AdaptivityConfig, LocalCluster, gini
from adaptrdf.datasets import ACADEMIC, random_graph, random_query
from adaptrdf.metrics import diff
from adaptrdf.wire import Tag


def run(transport):
    rng = random.Random(3)
    triples = random_graph(rng, 400, 5, n_vertices=80)
    queries = [random_query(rng, triples, rng.randint(1, 3)) for _ in range(4)] * 5
    with LocalCluster(3, transport=transport, config=AdaptivityConfig(freq_threshold=2), seed=11) as c:
        c.master.load(triples)
        results = [(o.mode, frozenset(o.result.rows)) for o in map(c.master.query, queries)]
        c.master.apply_updates([("+", ("x", "p0", "y")), ("-", triples[0]), ("-", triples[1])])
        results.append(c.master.query(queries[0]).result.rows)
        # registration only happens over sockets
        counts = {
            t: (v.remote_msgs, v.remote_bytes, v.loop_msgs, v.loop_bytes)
            for t, v in c.counters().items()
            if t not in (Tag.REGISTER, Tag.PEERS)
        }
        return results, counts, c.replica_contents()


def test_tcp_and_inproc_are_equivalent():
    a_res, a_cnt, a_rep = run("inproc")
    b_res, b_cnt, b_rep = run("tcp")
    assert a_res == b_res
    assert a_rep == b_rep
    assert a_cnt == b_cnt
    assert any(mode == "parallel" for mode, _ in a_res[:-1])


def test_unknown_transport():
    with pytest.raises(ValueError):
        LocalCluster(2, transport="carrier-pigeon")


def test_gini_examples():
    assert gini([5, 5, 5, 5]) == 0
    assert gini([0, 0, 0, 4]) == pytest.approx(0.75)
    assert gini([1, 3]) == pytest.approx(0.25)
    assert gini([]) == 0 and gini([0, 0]) == 0
    with pytest.raises(ValueError):
        gini([1, -1])


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30))
def test_gini_matches_pairwise_definition(xs):
    n, total = len(xs), sum(xs)
    if total == 0:
        assert gini(xs) == 0
        return
    expect = sum(abs(a - b) for a in xs for b in xs) / (2 * n * total)
    assert gini(xs) == pytest.approx(expect, abs=1e-9)
    assert 0 <= gini(xs) <= 1 - 1 / n + 1e-9


def test_metrics_snapshot():
    with LocalCluster(2) as c:
        c.master.load(ACADEMIC)
        snap = c.master.metrics()
        assert snap.main_counts == c.master.main_counts and sum(snap.main_counts) == 15
        assert snap.replication_ratio == 0
        assert snap.totals[Tag.LOAD_TRIPLES].remote_msgs == 2
        # collecting metrics does not perturb the counters
        again = c.master.metrics()
        assert all(v.remote_msgs == 0 and v.loop_msgs == 0 for v in diff(again, snap).values())
        c.master.query("SELECT ?s WHERE { ?s memberOf ?d . ?d subOrgOf ?u }", adaptive=False)
        grown = diff(c.master.metrics(), again)
        assert grown[Tag.SUBQUERY_PROJECTION].loop_msgs == 2
        assert grown[Tag.SUBQUERY_PROJECTION].remote_msgs == 2
        text = c.master.metrics().to_text()
        assert "replication_ratio\t0.000000" in text and "SUBQUERY_PROJECTION" in text
