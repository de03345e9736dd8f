"""Watch a cluster adapt to a repeating workload.

A few query shapes are issued over and over against a random graph. Each
shape starts on distributed semi-joins; once it has been seen more than
``freq_threshold`` times its pattern is copied into the replica indexes and
every later query of that shape runs in parallel with no traffic between
workers. The table printed at the end shows the cost of each phase.
"""

import random

from adaptrdf import AdaptivityConfig, LocalCluster
from adaptrdf.datasets import random_graph, random_query
from adaptrdf.metrics import WORKER_DATA_TAGS


def main() -> None:
    rng = random.Random(42)
    triples = random_graph(rng, 20_000, 12, skew=0.5)
    shapes = [random_query(rng, triples, rng.randint(2, 4), p_constant=0.0) for _ in range(4)]
    workload = [rng.choice(shapes) for _ in range(60)]

    with LocalCluster(4, config=AdaptivityConfig(freq_threshold=3)) as cluster:
        master = cluster.master
        master.load(triples)
        print(f"loaded {len(triples)} triples, per worker: {master.main_counts}")

        phases = {"semijoin": [0, 0, 0.0], "parallel": [0, 0, 0.0]}
        for i, q in enumerate(workload, 1):
            before = cluster.remote_bytes(WORKER_DATA_TAGS)
            out = master.query(q)
            cost = cluster.remote_bytes(WORKER_DATA_TAGS) - before
            ph = phases[out.mode]
            ph[0] += 1
            ph[1] += cost
            ph[2] += out.wall_ms
            if out.redistributed:
                print(f"query {i:2d}: shape became frequent, {out.redistributed} triples replicated"
                      f" (replication ratio now {master.replication_ratio():.3f})")

        print("\nmode       queries  worker bytes/query  ms/query")
        for mode, (n, nbytes, ms) in phases.items():
            if n:
                print(f"{mode:9s}  {n:7d}  {nbytes / n:18.0f}  {ms / n:8.2f}")
        snap = master.metrics()
        print(f"\nreplica Gini across workers: {snap.gini_replica:.3f}")


if __name__ == "__main__":
    main()
