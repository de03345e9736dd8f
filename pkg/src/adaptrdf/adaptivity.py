"""Template frequency accounting, proactive instantiation, and hash placement."""

from __future__ import annotations

import fnmatch
import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .bgp import BgpQuery, TemplateIneligible, TemplateKey, TriplePattern, derive_template, is_var


@dataclass
class AdaptivityConfig:
    freq_threshold: int = 3
    proactivity_threshold: int = 10
    rho_max: float = float("inf")

    def __post_init__(self) -> None:
        if min(self.freq_threshold, self.proactivity_threshold, self.rho_max) < 0:
            raise ValueError("adaptivity thresholds must be non-negative")


@dataclass
class QueryTemplate:
    key: TemplateKey
    frequency: int = 0
    values: list[Counter] = field(default_factory=list)
    triggered: bool = False

    def observe(self, vertex_terms: tuple[str, ...]) -> None:
        if not self.values:
            self.values = [Counter() for _ in vertex_terms]
        for counter, term in zip(self.values, vertex_terms):
            counter[term] += 1
        self.frequency += 1


@dataclass
class Trigger:
    template: QueryTemplate
    pattern: BgpQuery


class TemplateTracker:
    """Maps queries onto templates and decides when to redistribute."""

    def __init__(self, config: AdaptivityConfig, replication_ratio: Callable[[], float] = lambda: 0.0):
        self.config = config
        self.replication_ratio = replication_ratio
        self.templates: dict[TemplateKey, QueryTemplate] = {}
        self.unbounded_queries = 0

    def record_query(self, query: BgpQuery) -> Trigger | None:
        try:
            match = derive_template(query)
        except TemplateIneligible:
            # variable predicates are answered but never redistributed
            self.unbounded_queries += 1
            return None
        tmpl = self.templates.get(match.key)
        if tmpl is None:
            tmpl = self.templates[match.key] = QueryTemplate(match.key)
        tmpl.observe(match.vertex_terms)
        if (
            not tmpl.triggered
            and tmpl.frequency > self.config.freq_threshold
            and self.replication_ratio() < self.config.rho_max
        ):
            tmpl.triggered = True
            return Trigger(tmpl, instantiate_template(tmpl, self.config))
        return None


def _pick(counter: Counter) -> str:
    return min(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def instantiate_template(template: QueryTemplate, config: AdaptivityConfig) -> BgpQuery:
    """Pattern to redistribute for a triggered template.

    A vertex with more distinct observed values than the proactivity
    threshold stays a variable; otherwise it takes its most frequent value
    (which may itself be a variable name).
    """
    n = template.key.n_vertices
    chosen: list[str] = []
    taken: set[str] = set()
    for i in range(n):
        counter = template.values[i] if template.values else Counter()
        if counter and len(counter) <= config.proactivity_threshold:
            term = _pick(counter)
        else:
            names = Counter({t: c for t, c in counter.items() if is_var(t)})
            term = _pick(names) if names else f"?v{i}"
        if is_var(term) and term in taken:
            term = f"?v{i}"
        taken.add(term)
        chosen.append(term)
    patterns = tuple(TriplePattern(chosen[s], p, chosen[o]) for p, s, o in template.key.encoding)
    variables = tuple(dict.fromkeys(t for tp in patterns for t in (tp.s, tp.o) if is_var(t)))
    return BgpQuery(variables, patterns)


def term_hash(lexical: str) -> int:
    """Deterministic 64-bit hash of a term's UTF-8 form (BLAKE2b, 8-byte digest, big-endian)."""
    return int.from_bytes(hashlib.blake2b(lexical.encode("utf-8"), digest_size=8).digest(), "big")


class Placement:
    """``term -> worker`` via ``term_hash mod N``, overridable by pinned glob patterns."""

    def __init__(self, n_workers: int, pins: Mapping[str, int] | None = None):
        if n_workers < 1:
            raise ValueError("need at least one worker")
        self.n = n_workers
        self.pins = dict(pins or {})
        for w in self.pins.values():
            if not 0 <= w < n_workers:
                raise ValueError(f"pinned worker {w} out of range")
        self._cache: dict[str, int] = {}

    def worker_for(self, lexical: str) -> int:
        w = self._cache.get(lexical)
        if w is None:
            w = self._pinned(lexical)
            if w is None:
                w = term_hash(lexical) % self.n
            self._cache[lexical] = w
        return w

    def _pinned(self, lexical: str) -> int | None:
        if lexical in self.pins:
            return self.pins[lexical]
        for pattern, w in self.pins.items():
            if fnmatch.fnmatchcase(lexical, pattern):
                return w
        return None


def read_pin_file(path) -> dict[str, int]:
    """Lines of ``<term-or-glob> <worker>``; ``#`` starts a comment."""
    pins = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise ValueError(f"{path}:{lineno}: expected '<term> <worker>'")
            pins[parts[0]] = int(parts[1])
    return pins
