"""Message tags and the binary frame codec.

Frame layout: 4-byte big-endian length of everything that follows, a 1-byte
tag, a 2-byte sender id, then the tag's fields in schema order. Strings are
UTF-8 with a 2-byte big-endian length prefix (4 bytes for free text).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any


class Tag(IntEnum):
    LOAD_DONE = 1
    STATS_REPORT = 2
    QUERY_BROADCAST = 3
    SUBQUERY_PROJECTION = 4
    CANDIDATE_ROWS = 5
    PARTIAL_RESULT = 6
    REDIST_BEGIN = 7
    REDIST_TRIPLES = 8
    REDIST_COMMIT = 9
    REDIST_ABORT = 10
    UPDATE_BATCH = 11
    VALIDATION_REQUEST = 12
    VALIDATION_ROWS = 13
    ACK = 14
    # control plane
    REGISTER = 20
    PEERS = 21
    LOAD_TRIPLES = 22
    STATS_REQUEST = 23
    CARDINALITY_REQUEST = 24
    CARDINALITY_REPORT = 25
    METRICS_REQUEST = 26
    METRICS_REPORT = 27
    SHUTDOWN = 28
    CLIENT_REQUEST = 29
    CLIENT_REPLY = 30


MASTER = 0xFFFF
CLIENT = 0xFFFE

GROUPS = ("records", (("key", "i64"), ("rows", "rows")))

SCHEMAS: dict[Tag, tuple[tuple[str, Any], ...]] = {
    Tag.REGISTER: (("host", "str"), ("port", "u32")),
    Tag.PEERS: (("peers", ("records", (("id", "u16"), ("host", "str"), ("port", "u32")))),),
    Tag.LOAD_TRIPLES: (("op", "u32"), ("triples", "rows")),
    Tag.LOAD_DONE: (("op", "u32"), ("main_count", "u64")),
    Tag.STATS_REQUEST: (("op", "u32"),),
    Tag.STATS_REPORT: (("op", "u32"), ("stats", ("records", (("predicate", "str"), ("ps", "f64"), ("po", "f64"))))),
    Tag.CARDINALITY_REQUEST: (("op", "u32"), ("patterns", "rows")),
    Tag.CARDINALITY_REPORT: (("op", "u32"), ("counts", ("list", "u64"))),
    Tag.QUERY_BROADCAST: (
        ("op", "u32"),
        ("mode", "u8"),
        ("query", "text"),
        ("order", ("list", "u32")),
        ("embedding", ("list", "i64")),
    ),
    Tag.SUBQUERY_PROJECTION: (("op", "u32"), ("step", "u32"), ("groups", GROUPS)),
    Tag.CANDIDATE_ROWS: (("op", "u32"), ("step", "u32"), ("groups", GROUPS)),
    Tag.PARTIAL_RESULT: (("op", "u32"), ("header", ("list", "str")), ("rows", "rows")),
    Tag.REDIST_BEGIN: (
        ("op", "u32"),
        (
            "edges",
            (
                "records",
                (
                    ("id", "u32"),
                    ("parent", "i64"),
                    ("root", "str"),
                    ("parent_label", "str"),
                    ("predicate", "str"),
                    ("direction", "str"),
                    ("child", "str"),
                    ("level", "u16"),
                ),
            ),
        ),
    ),
    Tag.REDIST_TRIPLES: (("op", "u32"), ("step", "u32"), ("groups", GROUPS)),
    Tag.REDIST_COMMIT: (("op", "u32"),),
    Tag.REDIST_ABORT: (("op", "u32"),),
    Tag.UPDATE_BATCH: (("op", "u32"), ("kind", "u8"), ("triples", "rows"), ("assigned", ("list", "u16"))),
    Tag.VALIDATION_REQUEST: (("op", "u32"), ("step", "u32"), ("groups", GROUPS)),
    Tag.VALIDATION_ROWS: (("op", "u32"), ("step", "u32"), ("groups", GROUPS)),
    Tag.ACK: (
        ("op", "u32"),
        ("status", "u8"),
        ("main_count", "u64"),
        ("replica_count", "u64"),
        ("moved", "u64"),
        ("text", "text"),
    ),
    Tag.METRICS_REQUEST: (("op", "u32"),),
    Tag.METRICS_REPORT: (
        ("op", "u32"),
        (
            "counters",
            (
                "records",
                (("tag", "u8"), ("loop_msgs", "u64"), ("loop_bytes", "u64"), ("remote_msgs", "u64"), ("remote_bytes", "u64")),
            ),
        ),
        ("main_count", "u64"),
        ("replica_count", "u64"),
    ),
    Tag.SHUTDOWN: (),
    Tag.CLIENT_REQUEST: (("op", "u32"), ("command", "str"), ("args", "text")),
    Tag.CLIENT_REPLY: (("op", "u32"), ("status", "u8"), ("output", "text")),
}


class WireError(ValueError):
    pass


@dataclass
class Message:
    tag: Tag
    sender: int = MASTER
    body: dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, name: str) -> Any:
        try:
            return self.__dict__["body"][name]
        except KeyError:
            raise AttributeError(name) from None


def msg(tag: Tag, sender: int, **body: Any) -> Message:
    return Message(tag, sender, body)


_SCALARS = {"u8": ">B", "u16": ">H", "u32": ">I", "u64": ">Q", "i64": ">q", "f64": ">d"}
_STRUCTS = {k: struct.Struct(v) for k, v in _SCALARS.items()}
_U16 = _STRUCTS["u16"]
_U32 = _STRUCTS["u32"]
_HEADER = struct.Struct(">IBH")


def _put_str(out: list, value: str, wide: bool = False) -> None:
    b = value.encode("utf-8")
    if not wide and len(b) > 0xFFFF:
        raise WireError("string longer than 65535 bytes")
    out.append((_U32 if wide else _U16).pack(len(b)))
    out.append(b)


def _put(out: list, kind: Any, value: Any) -> None:
    if isinstance(kind, tuple):
        what, sub = kind
        out.append(_U32.pack(len(value)))
        if what == "list":
            for v in value:
                _put(out, sub, v)
        else:
            for rec in value:
                for (name, k), v in zip(sub, rec):
                    _put(out, k, v)
    elif kind == "str":
        _put_str(out, value)
    elif kind == "text":
        _put_str(out, value, wide=True)
    elif kind == "rows":
        rows = list(value)
        arity = len(rows[0]) if rows else 0
        if arity == 0:
            # column-less rows only say whether something matched
            rows = rows[:1]
        out.append(_U32.pack(len(rows)))
        out.append(_U16.pack(arity))
        pack = _U16.pack
        for row in rows:
            if len(row) != arity:
                raise WireError("ragged rows")
            for cell in row:
                b = cell.encode("utf-8")
                out.append(pack(len(b)))
                out.append(b)
    else:
        out.append(_STRUCTS[kind].pack(value))


def encode(message: Message) -> bytes:
    """Full frame including the length prefix."""
    out: list = []
    for name, kind in SCHEMAS[message.tag]:
        _put(out, kind, message.body[name])
    payload = b"".join(out)
    return _HEADER.pack(len(payload) + 3, int(message.tag), message.sender) + payload


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = memoryview(data)
        self.pos = pos

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise WireError("truncated frame")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def _count(self) -> int:
        # every list element takes at least one byte, so a forged count fails fast
        n = self.scalar("u32")
        if n > len(self.data) - self.pos:
            raise WireError("element count exceeds frame size")
        return n

    def scalar(self, kind: str):
        st = _STRUCTS[kind]
        return st.unpack(self.take(st.size))[0]

    def string(self, wide: bool = False) -> str:
        n = self.scalar("u32" if wide else "u16")
        return str(self.take(n), "utf-8")

    def read(self, kind: Any):
        if isinstance(kind, tuple):
            what, sub = kind
            n = self._count()
            if what == "list":
                return [self.read(sub) for _ in range(n)]
            return [tuple(self.read(k) for _, k in sub) for _ in range(n)]
        if kind == "str":
            return self.string()
        if kind == "text":
            return self.string(wide=True)
        if kind == "rows":
            n = self._count()
            arity = self.scalar("u16")
            if arity == 0 and n > 1:
                raise WireError("more than one column-less row")
            data, pos = self.data, self.pos
            rows = []
            for _ in range(n):
                row = []
                for _ in range(arity):
                    ln = (data[pos] << 8) | data[pos + 1]
                    pos += 2
                    if pos + ln > len(data):
                        raise WireError("truncated frame")
                    row.append(str(data[pos : pos + ln], "utf-8"))
                    pos += ln
                rows.append(tuple(row))
            self.pos = pos
            return rows
        return self.scalar(kind)


def decode(frame: bytes) -> Message:
    """Inverse of :func:`encode`; the frame must be complete and exact."""
    if len(frame) < _HEADER.size:
        raise WireError("short frame")
    length, tag, sender = _HEADER.unpack_from(frame)
    if length + 4 != len(frame):
        raise WireError(f"frame length {length} does not match {len(frame) - 4} payload bytes")
    try:
        tag = Tag(tag)
    except ValueError:
        raise WireError(f"unknown tag {tag}") from None
    reader = _Reader(frame, _HEADER.size)
    try:
        body = {name: reader.read(kind) for name, kind in SCHEMAS[tag]}
    except (IndexError, struct.error):
        raise WireError("truncated frame") from None
    except UnicodeDecodeError as exc:
        raise WireError(f"invalid UTF-8 in frame: {exc.reason}") from None
    if reader.pos != len(frame):
        raise WireError("trailing bytes in frame")
    return Message(tag, sender, body)
