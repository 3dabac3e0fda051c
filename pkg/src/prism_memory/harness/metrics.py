"""Episode metrics: improvement rate, knowledge reuse, exploration divergence."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..graph import RetrievalDistribution, exploration_divergence


def improvement_rate(series: Sequence[float], minimize: bool = True) -> float:
    """Fraction of steps after the first point where the best strictly improved."""
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    if len(series) == 1:
        return 0.0
    x = np.asarray(series, dtype=float)
    step = np.diff(x)
    hits = step < 0 if minimize else step > 0
    return float(hits.mean())


@dataclass(frozen=True)
class TraceEvent:
    """What one agent retrieved on one turn, with the authors of each record."""

    turn: int
    agent: str
    retrieved: tuple[str, ...]
    provenance: tuple[str, ...]


def reuse_ratio(agent: str, provenance: Iterable[str], authors: Iterable[str]) -> float:
    """Share of agent-authored records in a retrieved set written by someone else.

    Records whose author is not an episode agent (seeded skills) are neither
    own nor foreign and are left out of the ratio.
    """
    authors = set(authors)
    counted = [p for p in provenance if p in authors]
    if not counted:
        return 0.0
    return sum(p != agent for p in counted) / len(counted)


def knowledge_reuse(events: Iterable[TraceEvent], agent: str, authors: Iterable[str] | None = None) -> list[float]:
    """Per-turn reuse ratio for ``agent``, ordered by turn.

    ``authors`` defaults to every agent seen in the stream.
    """
    events = list(events)
    pool = set(authors) if authors is not None else {e.agent for e in events}
    mine = sorted((e for e in events if e.agent == agent), key=lambda e: e.turn)
    return [reuse_ratio(agent, e.provenance, pool) for e in mine]


def retrieval_distributions(
    events: Iterable[TraceEvent], agents: Sequence[str], smoothing: float = 1e-6
) -> list[RetrievalDistribution]:
    counts: dict[str, Counter] = {a: Counter() for a in agents}
    for e in events:
        if e.agent in counts:
            counts[e.agent].update(e.retrieved)
    support = set().union(*counts.values()) if counts else set()
    if not support:
        support = {"<none>"}
    return [RetrievalDistribution.from_counts(a, counts[a], support, smoothing) for a in agents]


def divergence_matrix(dists: Sequence[RetrievalDistribution]) -> list[list[float]]:
    n = len(dists)
    return [[0.0 if i == j else exploration_divergence(dists[i], dists[j]) for j in range(n)] for i in range(n)]


def mean_offdiagonal(matrix: Sequence[Sequence[float]]) -> float:
    n = len(matrix)
    if n < 2:
        return 0.0
    return float(sum(matrix[i][j] for i in range(n) for j in range(n) if i != j) / (n * (n - 1)))


def mann_kendall(series: Sequence[float]) -> int:
    """Mann-Kendall S statistic: sum of signs over all ordered pairs."""
    x = np.asarray(series, dtype=float)
    s = 0
    for i in range(len(x) - 1):
        s += int(np.sign(x[i + 1 :] - x[i]).sum())
    return s


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if len(a) != len(b) or len(a) < 2:
        raise ValueError("need two equal-length series with at least 2 points")
    if a.std() == 0 or b.std() == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])
