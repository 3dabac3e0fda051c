"""Five-phase consolidation: fork, distill, resolve conflicts, prune, sync index."""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .embedding import Embedder, embed
from .entropy import TokenModel, as_tokens, entropy, redundancy_ratio
from .errors import ForkConflict
from .extractor import Extractor
from .graph import CausalGraph
from .memory import MemoryRecord, Store, Tier


@dataclass(frozen=True)
class ConsolidationConfig:
    delta_mi: float = 0.8
    theta_cluster: float = 0.75
    theta_conflict: float = 0.9
    c_min: int = 3
    neighbor_scope: int = 20


@dataclass
class ConsolidationReport:
    distilled: list[tuple[list[str], str]] = field(default_factory=list)
    delta_I: float = 0.0
    conflicts_resolved: list[tuple[str, str, str]] = field(default_factory=list)
    pruned: list[tuple[str, float]] = field(default_factory=list)
    index_version: int = 0

    @property
    def empty(self) -> bool:
        return not (self.distilled or self.conflicts_resolved or self.pruned)


def _loser(a: MemoryRecord, b: MemoryRecord) -> tuple[MemoryRecord, MemoryRecord]:
    """(loser, winner): lower confidence loses, ties drop the higher id."""
    if a.confidence != b.confidence:
        return (a, b) if a.confidence < b.confidence else (b, a)
    return (a, b) if a.id > b.id else (b, a)


def _clusters(notes: list[MemoryRecord], theta: float) -> list[list[MemoryRecord]]:
    """Leader clustering in id order: join the first cluster whose leader is similar enough."""
    clusters: list[list[MemoryRecord]] = []
    for r in notes:
        for cl in clusters:
            if float(np.dot(cl[0].embedding, r.embedding)) >= theta:
                cl.append(r)
                break
        else:
            clusters.append([r])
    return clusters


def _neighbors(recs: list[MemoryRecord], scope: int) -> list[tuple[int, int]]:
    if len(recs) < 2:
        return []
    mat = np.stack([r.embedding for r in recs])
    sims = mat @ mat.T
    np.fill_diagonal(sims, -np.inf)
    pairs = set()
    # recs are id-sorted, so a stable sort breaks cosine ties by id
    for i in range(len(recs)):
        for j in np.argsort(-sims[i], kind="stable")[: min(scope, len(recs) - 1)]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return sorted(pairs, key=lambda p: (recs[p[0]].id, recs[p[1]].id))


def consolidate(
    store: Store,
    graph: CausalGraph,
    model: TokenModel,
    extractor: Extractor,
    embedder: Embedder,
    cfg: Optional[ConsolidationConfig] = None,
    now: int = 0,
    index_version: int = 0,
    sync: Optional[Callable[[Store, int], None]] = None,
) -> ConsolidationReport:
    """Consolidate ``store`` on a fork and swap the result in.

    ``sync`` is called with the consolidated store and the new index version
    before the swap; persistence layers hook their atomic index rewrite there.
    """
    cfg = cfg or ConsolidationConfig()
    report = ConsolidationReport()
    base_version = store.version

    # 1. fork
    fork = Store(store.cfg)
    snap = store.snapshot()
    fork.replace_all(copy.deepcopy(list(snap)))
    fork._next = store._next

    # 2. distill notes into skills
    pre_h = post_h = 0.0
    for cluster in _clusters(fork.tier(Tier.NOTES), cfg.theta_cluster):
        if len(cluster) < cfg.c_min:
            continue
        summary = extractor.summarize([r.content for r in cluster])
        if not as_tokens(summary):
            continue
        h = entropy(summary, model)
        if h >= store.cfg.tau1:
            continue
        window = deque(sorted(ev for r in cluster for ev in r.fitness_window))
        skill = MemoryRecord(
            id=fork.new_id(),
            content=summary,
            embedding=embed(summary, embedder),
            entropy=h,
            tier=Tier.SKILLS,
            confidence=max(r.confidence for r in cluster),
            provenance=cluster[0].provenance,
            fitness_window=window,
            retrieval_frequency=len(window),
            created_at=now,
            updated_at=now,
        )
        for r in cluster:
            fork.remove(r.id)
            pre_h += r.entropy
        fork.insert(skill)
        post_h += h
        report.distilled.append(([r.id for r in cluster], skill.id))
    report.delta_I = pre_h - post_h

    # 3. conflicts
    live = sorted(fork, key=lambda r: r.id)
    gone: set[str] = set()
    if len(live) > 1:
        mat = np.stack([r.embedding for r in live])
        sims = mat @ mat.T
        for i in range(len(live)):
            for j in range(i + 1, len(live)):
                a, b = live[i], live[j]
                if a.id in gone or b.id in gone or sims[i, j] < cfg.theta_conflict:
                    continue
                if extractor.contradicts(a.content, b.content):
                    loser, winner = _loser(a, b)
                    fork.remove(loser.id)
                    gone.add(loser.id)
                    report.conflicts_resolved.append((winner.id, loser.id, "contradiction: lower confidence"))

    # 4. mutual-information pruning among notes, repeated to a fixed point
    while True:
        notes = fork.tier(Tier.NOTES)
        removed = False
        dead: set[str] = set()
        for i, j in _neighbors(notes, cfg.neighbor_scope):
            a, b = notes[i], notes[j]
            if a.id in dead or b.id in dead:
                continue
            ratio = max(redundancy_ratio(a.content, b.content, model), redundancy_ratio(b.content, a.content, model))
            if ratio > cfg.delta_mi:
                loser, _ = _loser(a, b)
                fork.remove(loser.id)
                dead.add(loser.id)
                report.pruned.append((loser.id, ratio))
                removed = True
        if not removed:
            break

    # 5. index sync and swap
    report.index_version = index_version + 1
    if sync is not None:
        sync(fork, report.index_version)

    def _swap(s: Store) -> None:
        if s.version != base_version:
            raise ForkConflict("store changed while consolidating")
        s.replace_all(list(fork))
        s._next = max(s._next, fork._next)

    store.write(_swap)
    for sources, skill_id in report.distilled:
        for mids in graph.links.values():
            if mids.intersection(sources):
                mids.add(skill_id)
    live_ids = set(store.ids())
    for mids in graph.links.values():
        mids.intersection_update(live_ids)
    return report
