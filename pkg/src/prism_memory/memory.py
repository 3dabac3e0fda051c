"""Shared tri-partite memory store.

Records live in one of three tiers (skills, notes, attempts) chosen by their
information content and retrieval frequency. All mutations go through a
single writer lock; readers work on :class:`StoreSnapshot` copies.
"""

from __future__ import annotations

import copy
import hashlib
import json
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from types import MappingProxyType
from typing import Callable, Iterable, Iterator, Mapping, Optional

import numpy as np

from .errors import DuplicateId, InvalidOperation, TargetNotFound


class Tier(IntEnum):
    SKILLS = 1
    NOTES = 2
    ATTEMPTS = 3


@dataclass
class MemoryRecord:
    id: str
    content: str
    embedding: np.ndarray
    entropy: float
    tier: Tier = Tier.NOTES
    confidence: float = 0.5
    provenance: str = ""
    fitness_window: deque = field(default_factory=deque)
    retrieval_frequency: int = 0
    created_at: int = 0
    updated_at: int = 0
    token_count: int = 0

    def __post_init__(self) -> None:
        if not self.token_count:
            self.token_count = max(1, len(self.content.split()))

    def record_outcome(self, turn: int, success: bool) -> None:
        self.fitness_window.append((turn, bool(success)))

    def trim_window(self, now: int, w: int) -> None:
        win = self.fitness_window
        while win and win[0][0] < now - w:
            win.popleft()

    def window_counts(self, now: int, w: int) -> tuple[int, int]:
        """(successes, total) over retrievals with timestamp in [now - w, now]."""
        succ = total = 0
        for t, ok in self.fitness_window:
            if now - w <= t <= now:
                total += 1
                succ += ok
        return succ, total

    def persisted(self) -> dict:
        # embedding omitted: recomputed on load
        return {
            "id": self.id,
            "tier": int(self.tier),
            "content": self.content,
            "entropy": self.entropy,
            "confidence": self.confidence,
            "provenance": self.provenance,
            "frequency": self.retrieval_frequency,
            "window": [[t, int(ok)] for t, ok in self.fitness_window],
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "tokens": self.token_count,
        }


@dataclass(frozen=True)
class StoreConfig:
    tau1: float = 2.5
    tau2: float = 5.0
    phi1: int = 3
    phi3: int = 1
    epsilon_prune: float = 0.01
    context_budget: int = 4096
    embedding_dim: int = 256
    kappa0: float = 0.5
    protect_skills: bool = False
    neighbor_count: int = 5
    compression_beta: float = 1.0
    fitness_window: int = 50

    def __post_init__(self) -> None:
        if not 0 < self.tau1 < self.tau2:
            raise ValueError("require 0 < tau1 < tau2")
        if not self.phi1 > self.phi3 >= 0:
            raise ValueError("require phi1 > phi3 >= 0")
        if not 0 < self.epsilon_prune < 1:
            raise ValueError("epsilon_prune must lie in (0, 1)")
        if not 0 <= self.kappa0 <= 1:
            raise ValueError("kappa0 must lie in [0, 1]")


class OpKind(str, Enum):
    ADD = "add"
    UPDATE = "update"
    DELETE = "delete"
    NOOP = "noop"


@dataclass(frozen=True)
class UpdateOp:
    kind: OpKind
    target_id: Optional[str] = None
    new_content: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind in (OpKind.UPDATE, OpKind.DELETE) and self.target_id is None:
            raise InvalidOperation(f"{self.kind.value} requires target_id")
        if self.kind is OpKind.ADD and self.new_content is None:
            raise InvalidOperation("add requires new_content")


@dataclass
class StoreDelta:
    created: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.created) + len(self.modified) + len(self.removed)

    def extend(self, other: "StoreDelta") -> None:
        self.created.extend(other.created)
        self.modified.extend(other.modified)
        self.removed.extend(other.removed)


def assign_tier(entropy: float, frequency: int, cfg: StoreConfig) -> Tier:
    """Tier from information content and retrieval frequency.

    Demotion is checked first: a record that is both cheap and unretrieved
    goes to attempts rather than the always-loaded tier.
    """
    if entropy < 0 or frequency < 0:
        raise ValueError("entropy and frequency must be non-negative")
    if entropy >= cfg.tau2 or frequency < cfg.phi3:
        return Tier.ATTEMPTS
    if entropy < cfg.tau1 and frequency >= cfg.phi1:
        return Tier.SKILLS
    return Tier.NOTES


class StoreSnapshot:
    """Read-only copy of the store at one instant."""

    def __init__(self, records: Mapping[str, MemoryRecord], version: int):
        self.records: Mapping[str, MemoryRecord] = MappingProxyType(dict(records))
        self.version = version
        self._tier_cache: dict[Tier, list[MemoryRecord]] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[MemoryRecord]:
        return iter(self.records.values())

    def __contains__(self, rid: object) -> bool:
        return rid in self.records

    def __getitem__(self, rid: str) -> MemoryRecord:
        return self.records[rid]

    def tier(self, tier: Tier) -> list[MemoryRecord]:
        if tier not in self._tier_cache:
            self._tier_cache[tier] = sorted(
                (r for r in self.records.values() if r.tier == tier), key=lambda r: r.id
            )
        return self._tier_cache[tier]

    def mean_confidence(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.confidence for r in self.records.values()) / len(self.records)


class Store:
    """The shared hub. Mutations serialise on one writer lock."""

    def __init__(self, cfg: Optional[StoreConfig] = None):
        self.cfg = cfg or StoreConfig()
        self._records: dict[str, MemoryRecord] = {}
        self._lock = threading.RLock()
        self._next = 0
        self.version = 0

    # --- reads -------------------------------------------------------
    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, rid: object) -> bool:
        return rid in self._records

    def __iter__(self) -> Iterator[MemoryRecord]:
        return iter(list(self._records.values()))

    def get(self, rid: str) -> MemoryRecord:
        try:
            return self._records[rid]
        except KeyError:
            raise TargetNotFound(rid) from None

    def ids(self) -> list[str]:
        return sorted(self._records)

    def tier(self, tier: Tier) -> list[MemoryRecord]:
        return sorted((r for r in self._records.values() if r.tier == tier), key=lambda r: r.id)

    def snapshot(self) -> StoreSnapshot:
        with self._lock:
            recs = {}
            for rid, r in self._records.items():
                c = copy.copy(r)
                c.fitness_window = deque(r.fitness_window)
                recs[rid] = c
            return StoreSnapshot(recs, self.version)

    def digest(self) -> str:
        blob = "\n".join(
            json.dumps(self._records[rid].persisted(), sort_keys=True) for rid in self.ids()
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # --- writer ------------------------------------------------------
    def new_id(self) -> str:
        with self._lock:
            while True:
                rid = f"m{self._next:06d}"
                self._next += 1
                if rid not in self._records:
                    return rid

    def write(self, fn: Callable[["Store"], object]) -> object:
        """Run ``fn`` as a single serialised writer operation."""
        with self._lock:
            out = fn(self)
            self.version += 1
            return out

    def insert(self, record: MemoryRecord) -> None:
        with self._lock:
            if record.id in self._records:
                raise DuplicateId(record.id)
            self._records[record.id] = record
            self._bump_next(record.id)
            self.version += 1

    def remove(self, rid: str) -> MemoryRecord:
        with self._lock:
            try:
                rec = self._records.pop(rid)
            except KeyError:
                raise TargetNotFound(rid) from None
            self.version += 1
            return rec

    def replace_all(self, records: Iterable[MemoryRecord]) -> None:
        with self._lock:
            self._records = {r.id: r for r in records}
            for rid in self._records:
                self._bump_next(rid)
            self.version += 1

    def _bump_next(self, rid: str) -> None:
        if rid.startswith("m") and rid[1:].isdigit():
            self._next = max(self._next, int(rid[1:]) + 1)

    def restratify(self, now: int, window: Optional[int] = None) -> list[str]:
        """Refresh retrieval frequencies and tiers; return ids whose tier changed."""
        w = self.cfg.fitness_window if window is None else window
        changed = []
        with self._lock:
            for rid in sorted(self._records):
                r = self._records[rid]
                r.trim_window(now, w)
                r.retrieval_frequency = len(r.fitness_window)
                t = assign_tier(r.entropy, r.retrieval_frequency, self.cfg)
                if t != r.tier:
                    r.tier = t
                    changed.append(rid)
            self.version += 1
        return changed


def apply_update(
    op: UpdateOp, candidate: Optional[MemoryRecord], store: Store, now: int = 0
) -> StoreDelta:
    """Apply one of the four update operations to ``store``."""
    delta = StoreDelta()
    if op.kind is OpKind.NOOP:
        return delta
    with store._lock:
        if op.kind is OpKind.DELETE:
            store.remove(op.target_id)
            delta.removed.append(op.target_id)
            return delta
        if candidate is None:
            raise InvalidOperation(f"{op.kind.value} requires a candidate record")
        if op.kind is OpKind.ADD:
            if candidate.id in store:
                raise DuplicateId(candidate.id)
            candidate.content = op.new_content
            candidate.confidence = store.cfg.kappa0
            candidate.fitness_window = deque()
            candidate.retrieval_frequency = 0
            candidate.created_at = candidate.updated_at = now
            store.insert(candidate)
            delta.created.append(candidate.id)
            return delta
        # UPDATE
        target = store.get(op.target_id)
        merged = sorted(list(target.fitness_window) + list(candidate.fitness_window))
        target.fitness_window = deque(ev for ev in merged if ev[0] >= now - store.cfg.fitness_window)
        target.content = op.new_content if op.new_content is not None else candidate.content
        target.embedding = candidate.embedding
        target.entropy = candidate.entropy
        target.token_count = candidate.token_count
        target.updated_at = now
        store.version += 1
        delta.modified.append(target.id)
        return delta


@dataclass(frozen=True)
class BudgetReport:
    total_tokens: int
    bound: float
    within_bound: bool


def tier1_token_budget_check(store: Store | StoreSnapshot, cfg: StoreConfig, mean_entropy: float) -> BudgetReport:
    """Compare always-loaded token cost against C * tau1 / mean entropy."""
    if mean_entropy <= 0:
        raise ValueError("mean_entropy must be > 0")
    total = sum(r.token_count for r in store.tier(Tier.SKILLS))
    bound = cfg.context_budget * cfg.tau1 / mean_entropy
    return BudgetReport(total, bound, total <= bound)


def prune_below_threshold(store: Store, epsilon: float, protect_skills: Optional[bool] = None) -> list[str]:
    """Remove every record whose confidence fell below ``epsilon``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    protect = store.cfg.protect_skills if protect_skills is None else protect_skills
    with store._lock:
        doomed = [
            r.id
            for r in store
            if r.confidence < epsilon and not (protect and r.tier == Tier.SKILLS)
        ]
        for rid in sorted(doomed):
            store.remove(rid)
    return sorted(doomed)
