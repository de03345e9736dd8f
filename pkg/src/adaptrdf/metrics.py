"""Communication counters, load balance and replication summaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .transport import TagCounter
from .wire import Tag

WORKER_DATA_TAGS = frozenset({Tag.SUBQUERY_PROJECTION, Tag.CANDIDATE_ROWS})


def gini(values: Sequence[float]) -> float:
    """Population Gini: sum of |xi - xj| over all ordered pairs, divided by 2 n^2 mean."""
    x = np.asarray(values, dtype=float)
    if (x < 0).any():
        raise ValueError("gini needs non-negative values")
    if x.size == 0 or x.sum() == 0:
        return 0.0
    # sorted form of the mean absolute difference, O(n log n)
    xs = np.sort(x)
    n = xs.size
    i = np.arange(1, n + 1)
    return float(np.sum((2 * i - n - 1) * xs) / (n * n * xs.mean()))


@dataclass
class MetricsSnapshot:
    per_node: dict[int, dict[Tag, TagCounter]]
    main_counts: list[int]
    replica_counts: list[int]
    totals: dict[Tag, TagCounter] = field(default_factory=dict)

    @property
    def gini_main(self) -> float:
        return gini(self.main_counts)

    @property
    def gini_replica(self) -> float:
        return gini(self.replica_counts)

    @property
    def replication_ratio(self) -> float:
        d = sum(self.main_counts)
        return sum(self.replica_counts) / d if d else 0.0

    def remote_bytes(self, tags=None) -> int:
        return sum(c.remote_bytes for t, c in self.totals.items() if tags is None or t in tags)

    def remote_msgs(self, tags=None) -> int:
        return sum(c.remote_msgs for t, c in self.totals.items() if tags is None or t in tags)

    def to_text(self) -> str:
        lines = [
            f"workers\t{len(self.main_counts)}",
            f"main_counts\t{' '.join(map(str, self.main_counts))}",
            f"replica_counts\t{' '.join(map(str, self.replica_counts))}",
            f"replication_ratio\t{self.replication_ratio:.6f}",
            f"gini_main\t{self.gini_main:.6f}",
            f"gini_replica\t{self.gini_replica:.6f}",
            "tag\tloop_msgs\tloop_bytes\tremote_msgs\tremote_bytes",
        ]
        for tag in sorted(self.totals):
            c = self.totals[tag]
            lines.append(f"{tag.name}\t{c.loop_msgs}\t{c.loop_bytes}\t{c.remote_msgs}\t{c.remote_bytes}")
        return "\n".join(lines) + "\n"


def build_snapshot(per_node: Mapping[int, Mapping[Tag, TagCounter]], main_counts, replica_counts) -> MetricsSnapshot:
    totals: dict[Tag, TagCounter] = {}
    for counters in per_node.values():
        for tag, c in counters.items():
            totals.setdefault(tag, TagCounter()).add(c)
    return MetricsSnapshot({k: dict(v) for k, v in per_node.items()}, list(main_counts), list(replica_counts), totals)


def diff(after: MetricsSnapshot, before: MetricsSnapshot) -> dict[Tag, TagCounter]:
    """Per-tag counter growth between two snapshots."""
    out = {}
    for tag, a in after.totals.items():
        b = before.totals.get(tag, TagCounter())
        out[tag] = TagCounter(a.loop_msgs - b.loop_msgs, a.loop_bytes - b.loop_bytes, a.remote_msgs - b.remote_msgs, a.remote_bytes - b.remote_bytes)
    return out
