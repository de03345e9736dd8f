"""Cluster runtime: start a master and N workers over in-process queues or TCP."""

from __future__ import annotations

import logging
import threading
from typing import Mapping

from .adaptivity import AdaptivityConfig, Placement
from .master import Master
from .stats import TYPE_PREDICATES
from .transport import Endpoint, InprocNetwork, TagCounter, TcpEndpoint
from .wire import MASTER, Tag, msg
from .worker import Worker

log = logging.getLogger(__name__)


def register_worker(ep: TcpEndpoint, master_host: str, master_port: int) -> None:
    """Announce a worker's listening address to the master."""
    ep.set_address(MASTER, master_host, master_port)
    ep.send(MASTER, msg(Tag.REGISTER, ep.node_id, host=ep.host, port=ep.port))


def await_registrations(ep: TcpEndpoint, n_workers: int, timeout: float) -> None:
    """Collect one REGISTER per worker id, then tell every worker where its peers listen."""
    regs = {}
    while len(regs) < n_workers:
        m = ep.recv(lambda m: m.tag == Tag.REGISTER, timeout)
        if not 0 <= m.sender < n_workers:
            raise ValueError(f"worker id {m.sender} outside 0..{n_workers - 1}")
        regs[m.sender] = (m.host, m.port)
    peers = [(w, host, port) for w, (host, port) in sorted(regs.items())]
    for w, host, port in peers:
        ep.set_address(w, host, port)
    for w, _, _ in peers:
        ep.send(w, msg(Tag.PEERS, MASTER, peers=peers))


class LocalCluster:
    """Master plus ``n_workers`` worker threads in this process.

    ``transport="tcp"`` runs every node behind its own loopback socket, which
    exercises the same framing and registration path as separate processes.
    """

    def __init__(
        self,
        n_workers: int,
        transport: str = "inproc",
        config: AdaptivityConfig | None = None,
        pins: Mapping[str, int] | None = None,
        seed: int = 0,
        timeout: float = 60.0,
        type_predicates=TYPE_PREDICATES,
    ):
        self.n = n_workers
        self.transport = transport
        self.placement = Placement(n_workers, pins)
        self.endpoints: list[Endpoint] = []
        self.workers: list[Worker] = []
        self._threads: list[threading.Thread] = []
        if transport == "inproc":
            net = InprocNetwork()
            master_ep = net.endpoint(MASTER)
            self.endpoints = [net.endpoint(i) for i in range(n_workers)]
        elif transport == "tcp":
            master_ep = TcpEndpoint(MASTER)
            self.endpoints = [TcpEndpoint(i) for i in range(n_workers)]
        else:
            raise ValueError(f"unknown transport {transport!r}")
        self.workers = [Worker(i, n_workers, ep, self.placement, timeout) for i, ep in enumerate(self.endpoints)]
        for w in self.workers:
            t = threading.Thread(target=w.serve, daemon=True, name=f"worker-{w.id}")
            t.start()
            self._threads.append(t)
        if transport == "tcp":
            for ep in self.endpoints:
                register_worker(ep, master_ep.host, master_ep.port)
            await_registrations(master_ep, n_workers, timeout)
        self.master = Master(master_ep, n_workers, config, seed=seed, timeout=timeout, type_predicates=type_predicates)

    def __enter__(self) -> "LocalCluster":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self.master.shutdown()
        for t in self._threads:
            t.join(timeout=5)
        for ep in [self.master.ep, *self.endpoints]:
            ep.close()

    # -- inspection helpers (tests, demos) --------------------------------

    def main_contents(self) -> list[set[tuple[str, str, str]]]:
        out = []
        for w in self.workers:
            d = w.dict
            out.append({(d.resolve(s), d.resolve(p), d.resolve(o)) for s, p, o in w.store.main.triples()})
        return out

    def replica_contents(self) -> list[dict[tuple, set[tuple[str, str, str]]]]:
        return [w.replica.contents(w.dict) for w in self.workers]

    def replica_shapes(self) -> list[set[tuple]]:
        return [w.replica.shape() for w in self.workers]

    def counters(self) -> dict[Tag, TagCounter]:
        """Per-tag counters summed over every node, read without sending messages."""
        total: dict[Tag, TagCounter] = {}
        for ep in [self.master.ep, *self.endpoints]:
            for tag, c in ep.metrics.snapshot().items():
                total.setdefault(tag, TagCounter()).add(c)
        return total

    def remote_bytes(self, tags=None) -> int:
        return sum(c.remote_bytes for t, c in self.counters().items() if tags is None or t in tags)

    def remote_msgs(self, tags=None) -> int:
        return sum(c.remote_msgs for t, c in self.counters().items() if tags is None or t in tags)
