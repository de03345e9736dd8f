"""Message transports (in-process and TCP), barriers, and traffic counters."""

from __future__ import annotations

import logging
import os
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .wire import Message, Tag, decode, encode

log = logging.getLogger(__name__)

Predicate = Callable[[Message], bool]

# metric collection traffic must not perturb what it measures
UNMETERED = frozenset({Tag.METRICS_REQUEST, Tag.METRICS_REPORT})


class TransportError(ConnectionError):
    pass


class BarrierTimeout(TimeoutError):
    pass


@dataclass
class TagCounter:
    loop_msgs: int = 0
    loop_bytes: int = 0
    remote_msgs: int = 0
    remote_bytes: int = 0

    def add(self, other: "TagCounter") -> None:
        self.loop_msgs += other.loop_msgs
        self.loop_bytes += other.loop_bytes
        self.remote_msgs += other.remote_msgs
        self.remote_bytes += other.remote_bytes


@dataclass
class Metrics:
    """Sent-side counters per tag, split by loopback (to self) and remote."""

    counters: dict[Tag, TagCounter] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, tag: Tag, nbytes: int, loopback: bool) -> None:
        if tag in UNMETERED:
            return
        with self._lock:
            c = self.counters.setdefault(tag, TagCounter())
            if loopback:
                c.loop_msgs += 1
                c.loop_bytes += nbytes
            else:
                c.remote_msgs += 1
                c.remote_bytes += nbytes

    def snapshot(self) -> dict[Tag, TagCounter]:
        with self._lock:
            return {t: TagCounter(**vars(c)) for t, c in self.counters.items()}

    def merge(self, other: dict[Tag, TagCounter]) -> None:
        with self._lock:
            for t, c in other.items():
                self.counters.setdefault(t, TagCounter()).add(c)


def bandwidth_limit() -> float | None:
    raw = os.environ.get("PHD_BW_LIMIT")
    if not raw:
        return None
    value = float(raw)
    return value if value > 0 else None


class Endpoint:
    """One node's mailbox. Subclasses implement :meth:`_deliver`."""

    def __init__(self, node_id: int):
        self.node_id = node_id
        self.metrics = Metrics()
        self.inbox: "queue.Queue[bytes]" = queue.Queue()
        self._stash: list[Message] = []
        self._bw = bandwidth_limit()

    def send(self, to: int, message: Message) -> int:
        message.sender = self.node_id
        frame = encode(message)
        loopback = to == self.node_id
        if self._bw and not loopback:
            time.sleep(len(frame) / self._bw)
        # counted before delivery so a reply can never overtake its sender's tally
        self.metrics.record(message.tag, len(frame), loopback)
        self._deliver(to, frame)
        return len(frame)

    def broadcast(self, message: Message, targets: Iterable[int]) -> None:
        for to in targets:
            self.send(to, Message(message.tag, message.sender, message.body))

    def _deliver(self, to: int, frame: bytes) -> None:
        raise NotImplementedError

    def recv(self, pred: Predicate | None = None, timeout: float | None = None) -> Message:
        """Next message satisfying ``pred``; others are stashed for later calls."""
        for i, m in enumerate(self._stash):
            if pred is None or pred(m):
                return self._stash.pop(i)
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                raise BarrierTimeout("timed out waiting for message")
            try:
                frame = self.inbox.get(timeout=remaining)
            except queue.Empty:
                raise BarrierTimeout("timed out waiting for message") from None
            m = decode(frame)
            if pred is None or pred(m):
                return m
            self._stash.append(m)

    def barrier(self, pred: Predicate, count: int, timeout: float | None = None) -> list[Message]:
        """Block until ``count`` messages matching ``pred`` have arrived."""
        got: list[Message] = []
        deadline = None if timeout is None else time.monotonic() + timeout
        while len(got) < count:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            try:
                got.append(self.recv(pred, remaining))
            except BarrierTimeout:
                raise BarrierTimeout(f"barrier got {len(got)} of {count} messages") from None
        return got

    def drop_stash(self, keep: Predicate) -> None:
        self._stash = [m for m in self._stash if keep(m)]

    def close(self) -> None:
        pass


class InprocNetwork:
    """Shared registry of in-process endpoints; delivery is a queue put."""

    def __init__(self) -> None:
        self.endpoints: dict[int, InprocEndpoint] = {}

    def endpoint(self, node_id: int) -> "InprocEndpoint":
        ep = InprocEndpoint(node_id, self)
        self.endpoints[node_id] = ep
        return ep


class InprocEndpoint(Endpoint):
    def __init__(self, node_id: int, network: InprocNetwork):
        super().__init__(node_id)
        self.network = network

    def _deliver(self, to: int, frame: bytes) -> None:
        target = self.network.endpoints.get(to)
        if target is None:
            raise TransportError(f"no endpoint {to}")
        target.inbox.put(frame)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


class TcpEndpoint(Endpoint):
    """Listens for inbound frames; opens one outbound connection per peer.

    Peers without a known listening address (e.g. CLI clients) are answered
    over the connection they used to reach us.
    """

    def __init__(self, node_id: int, host: str = "127.0.0.1", port: int = 0):
        super().__init__(node_id)
        self.addresses: dict[int, tuple[str, int]] = {}
        self._out: dict[int, socket.socket] = {}
        self._inbound: dict[int, socket.socket] = {}
        self._locks: dict[int, threading.Lock] = {}
        self._guard = threading.Lock()
        self._closed = False
        self._server = socket.create_server((host, port))
        self.host, self.port = self._server.getsockname()[:2]
        threading.Thread(target=self._accept_loop, daemon=True, name=f"accept-{node_id}").start()

    def set_address(self, node_id: int, host: str, port: int) -> None:
        self.addresses[node_id] = (host, port)

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            while True:
                try:
                    head = _recv_exact(conn, 4)
                    if head is None:
                        return
                    body = _recv_exact(conn, int.from_bytes(head, "big"))
                except OSError:
                    return
                if body is None:
                    return
                sender = int.from_bytes(body[1:3], "big")
                with self._guard:
                    if self._inbound.get(sender) is not conn:
                        self._inbound[sender] = conn
                        if sender not in self.addresses:
                            # reply over the newest connection from an address-less peer
                            self._out.pop(sender, None)
                self.inbox.put(head + body)
        finally:
            with self._guard:
                for table in (self._inbound, self._out):
                    for k in [k for k, v in table.items() if v is conn]:
                        del table[k]

    def _connection(self, to: int) -> tuple[socket.socket, threading.Lock]:
        with self._guard:
            sock = self._out.get(to)
            if sock is None:
                if to in self.addresses:
                    try:
                        sock = socket.create_connection(self.addresses[to], timeout=10)
                    except OSError as exc:
                        raise TransportError(f"cannot reach node {to}: {exc}") from exc
                    sock.settimeout(None)
                    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    threading.Thread(target=self._read_loop, args=(sock,), daemon=True).start()
                elif to in self._inbound:
                    sock = self._inbound[to]
                else:
                    raise TransportError(f"no address for node {to}")
                self._out[to] = sock
                self._locks[to] = threading.Lock()
            return sock, self._locks[to]

    def connect_to(self, to: int, host: str, port: int) -> None:
        self.set_address(to, host, port)
        self._connection(to)

    def _deliver(self, to: int, frame: bytes) -> None:
        if to == self.node_id:
            self.inbox.put(frame)
            return
        sock, lock = self._connection(to)
        try:
            with lock:
                sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send to {to} failed: {exc}") from exc

    def close(self) -> None:
        self._closed = True
        try:
            self._server.close()
        except OSError:
            pass
        with self._guard:
            socks = set(self._out.values()) | set(self._inbound.values())
        for s in socks:
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
