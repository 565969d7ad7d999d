"""Corpus statistics: fix-pattern distributions and annotator agreement."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import AgentFixError
from .model import AnnotatedFix

GROUP_KEYS = ("source", "framework", "pattern", "component")


class EmptyCorpus(AgentFixError):
    pass


class LengthMismatch(AgentFixError):
    pass


class EmptyInput(AgentFixError):
    pass


@dataclass(frozen=True)
class DistributionRow:
    key: str
    count: int
    share: float


@dataclass(frozen=True)
class DistributionTable:
    rows: tuple[DistributionRow, ...]
    total: int

    def __post_init__(self):
        if self.total < 1 or sum(r.count for r in self.rows) != self.total:
            raise ValueError("counts must sum to a positive total")

    def share_of(self, key: str) -> float:
        for row in self.rows:
            if row.key == key:
                return row.share
        return 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("key", "count", "share"))
        for row in self.rows:
            writer.writerow((row.key, row.count, f"{row.share:.6f}"))
        return buf.getvalue()


def _key(fix: AnnotatedFix, group_by: str) -> str:
    if group_by == "source":
        return fix.source.value
    if group_by == "framework":
        return fix.framework or "(unspecified)"
    if group_by == "pattern":
        return fix.pattern.name
    return fix.component.value


def pattern_distribution(corpus: Sequence[AnnotatedFix], group_by: str = "pattern") -> DistributionTable:
    """Count entries per key; largest first, ties broken by key."""
    if group_by not in GROUP_KEYS:
        raise ValueError(f"group_by must be one of {', '.join(GROUP_KEYS)}")
    if not corpus:
        raise EmptyCorpus("cannot build a distribution from an empty corpus")
    counts = Counter(_key(fix, group_by) for fix in corpus)
    total = len(corpus)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return DistributionTable(tuple(DistributionRow(k, n, n / total) for k, n in ordered), total)


def cohens_kappa(labels_a: Sequence[str], labels_b: Sequence[str]) -> float:
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"{len(labels_a)} labels vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise EmptyInput("need at least one labelled item")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    freq_a, freq_b = Counter(labels_a), Counter(labels_b)
    p_e = sum(freq_a[c] * freq_b[c] for c in freq_a) / (n * n)
    if p_e == 1.0:
        # both annotators used one and the same label throughout
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)
