"""Term dictionary and the line-oriented triple file format."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, NamedTuple, Union

IRI = "iri"
LITERAL = "literal"


class ParseError(ValueError):
    """Malformed input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class Triple(NamedTuple):
    s: str
    p: str
    o: str


def term_kind(lexical: str) -> str:
    return LITERAL if lexical.startswith('"') else IRI


@dataclass
class Dictionary:
    """Bijective lexical <-> integer id mapping. Ids are dense and never reused."""

    forward: dict[str, int] = field(default_factory=dict)
    reverse: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)

    def intern(self, lexical: str, kind: str | None = None) -> int:
        tid = self.forward.get(lexical)
        if tid is not None:
            return tid
        if not lexical:
            raise ValueError("cannot intern an empty term")
        tid = len(self.reverse)
        self.forward[lexical] = tid
        self.reverse.append(lexical)
        self.kinds.append(kind or term_kind(lexical))
        return tid

    def lookup(self, lexical: str) -> int | None:
        """Id of ``lexical`` if already interned, without interning it."""
        return self.forward.get(lexical)

    def resolve(self, tid: int) -> str:
        if not 0 <= tid < len(self.reverse):
            raise KeyError(f"unknown term id {tid}")
        return self.reverse[tid]

    def kind(self, tid: int) -> str:
        self.resolve(tid)
        return self.kinds[tid]

    def __len__(self) -> int:
        return len(self.reverse)


def intern_term(dictionary: Dictionary, lexical: str, kind: str | None = None) -> int:
    return dictionary.intern(lexical, kind)


def resolve_term(dictionary: Dictionary, tid: int) -> str:
    return dictionary.resolve(tid)


def _lines(stream: Union[IO[bytes], IO[str], bytes, str, Iterable]) -> Iterator[str]:
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def parse_triple_line(line: str, lineno: int | None = None) -> Triple | None:
    """Parse one line; ``None`` for blank and comment lines."""
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    tokens = text.split()
    if tokens[-1] == ".":
        tokens.pop()
    if len(tokens) != 3:
        raise ParseError(f"expected 3 terms, found {len(tokens)}", lineno)
    return Triple(*tokens)


def parse_triples(stream) -> list[Triple]:
    """Parse a whole triple file. Any malformed line fails the entire parse."""
    out = []
    for lineno, line in enumerate(_lines(stream), start=1):
        t = parse_triple_line(line, lineno)
        if t is not None:
            out.append(t)
    return out


def serialize_triples(triples: Iterable[tuple[str, str, str]]) -> str:
    return "".join(f"{s} {p} {o} .\n" for s, p, o in triples)


def read_triple_file(path) -> list[Triple]:
    with open(path, "rb") as fh:
        return parse_triples(fh)
