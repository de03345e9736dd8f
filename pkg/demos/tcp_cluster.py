"""Run the same session over real sockets and compare it with in-process queues.

Every node gets its own TCP listener on localhost; workers register with the
master and learn their peers' addresses from it. The per-tag byte counts at
the end are identical to an in-process run because both transports carry the
same frames.
"""

from adaptrdf import LocalCluster
from adaptrdf.datasets import ACADEMIC
from adaptrdf.wire import Tag

QUERIES = [
    "SELECT ?x WHERE { ?x worksFor Stanford-CS . Lisa advisor ?x }",
    "SELECT ?s ?d WHERE { ?s memberOf ?d . ?d subOrgOf Stanford }",
]


def session(transport: str) -> dict:
    with LocalCluster(3, transport=transport) as cluster:
        m = cluster.master
        m.load(ACADEMIC)
        for _ in range(5):
            for q in QUERIES:
                out = m.query(q)
        print(f"[{transport}] last query ran in {out.mode} mode:\n{out.result.to_text()}")
        return {t.name: c.remote_bytes for t, c in cluster.counters().items() if t not in (Tag.REGISTER, Tag.PEERS)}


def main() -> None:
    tcp = session("tcp")
    inproc = session("inproc")
    print(f"{'tag':22s} {'tcp bytes':>10s} {'inproc bytes':>13s}")
    for tag in sorted(tcp):
        print(f"{tag:22s} {tcp[tag]:10d} {inproc.get(tag, 0):13d}")
    print("identical:", tcp == inproc)


if __name__ == "__main__":
    main()
