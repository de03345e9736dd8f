"""Small fixed graphs and seeded random generators for graphs and queries."""

from __future__ import annotations

import itertools
import random
from collections import defaultdict

from .bgp import BgpQuery, TriplePattern, UnsupportedQueryError, validate_connected

# academic example graph: students, professors, departments, universities
ACADEMIC = (
    ("Prof.Williams", "worksFor", "Stanford-CS"),
    ("Prof.James", "worksFor", "Stanford-CS"),
    ("Lisa", "advisor", "Prof.Williams"),
    ("Lisa", "advisor", "Prof.James"),
    ("Lisa", "gradFrom", "MIT"),
    ("John", "gradFrom", "MIT"),
    ("Stanford-CS", "subOrgOf", "Stanford"),
    ("Stanford-ENG", "subOrgOf", "Stanford"),
    ("MIT-CS", "subOrgOf", "MIT"),
    ("Ben", "memberOf", "Stanford-CS"),
    ("Prof.James", "memberOf", "Stanford-ENG"),
    ("John", "memberOf", "Stanford-ENG"),
    ("Peter", "memberOf", "MIT-CS"),
    ("MIT", "type", "university"),
    ("MIT-CS", "type", "department"),
)


def random_graph(
    rng: random.Random,
    n_triples: int,
    n_predicates: int,
    n_vertices: int | None = None,
    skew: float = 1.0,
) -> list[tuple[str, str, str]]:
    """Distinct triples with Zipf-like vertex popularity (``skew`` = 0 is uniform)."""
    n_vertices = n_vertices or max(10, n_triples // 4)
    cum = list(itertools.accumulate(1.0 / (i + 1) ** skew for i in range(n_vertices)))
    verts = [f"v{i}" for i in range(n_vertices)]
    preds = [f"p{i}" for i in range(n_predicates)]
    seen: set[tuple[str, str, str]] = set()
    out = []
    attempts = 0
    while len(out) < n_triples and attempts < 50 * n_triples:
        attempts += 1
        s, o = rng.choices(verts, cum_weights=cum, k=2)
        t = (s, rng.choice(preds), o)
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def random_query(
    rng: random.Random,
    triples: list[tuple[str, str, str]],
    n_patterns: int,
    p_constant: float = 0.2,
    adjacency: dict | None = None,
) -> BgpQuery | None:
    """Grow a connected set of data edges, then lift vertices to variables.

    Every vertex starts as a variable; each is then turned into a constant
    with probability ``p_constant`` when the query stays connected through
    shared variables. Returns ``None`` if no connected edge set of the
    requested size was found near the random start.
    """
    adj = adjacency if adjacency is not None else build_adjacency(triples)
    for _ in range(20):
        chosen = [rng.choice(triples)]
        frontier_vertices = [chosen[0][0], chosen[0][2]]
        picked = set(chosen)
        tries = 0
        while len(chosen) < n_patterns and tries < 10 * n_patterns:
            tries += 1
            v = rng.choice(frontier_vertices)
            cand = adj.get(v)
            if not cand:
                continue
            t = rng.choice(cand)
            if t in picked:
                continue
            picked.add(t)
            chosen.append(t)
            frontier_vertices.extend((t[0], t[2]))
        if len(chosen) < n_patterns:
            continue
        vertices = list(dict.fromkeys(x for t in chosen for x in (t[0], t[2])))
        names = {v: f"?x{i}" for i, v in enumerate(vertices)}
        patterns = [TriplePattern(names[s], p, names[o]) for s, p, o in chosen]
        q = BgpQuery(tuple(dict.fromkeys(v for tp in patterns for v in tp.variables())), tuple(patterns))
        for v in vertices:
            if rng.random() >= p_constant:
                continue
            trial = [TriplePattern(*(v if x == names[v] else x for x in tp)) for tp in q.patterns]
            proj = tuple(x for x in q.projection if x != names[v])
            cand_q = BgpQuery(proj, tuple(trial))
            if not proj:
                continue
            try:
                validate_connected(cand_q)
            except UnsupportedQueryError:
                continue
            q = cand_q
        proj = list(q.projection)
        rng.shuffle(proj)
        k = rng.randint(1, len(proj))
        return BgpQuery(tuple(sorted(proj[:k], key=q.projection.index)), q.patterns)
    return None


def build_adjacency(triples) -> dict[str, list[tuple[str, str, str]]]:
    adj: dict[str, list] = defaultdict(list)
    for t in triples:
        adj[t[0]].append(t)
        if t[2] != t[0]:
            adj[t[2]].append(t)
    return adj
