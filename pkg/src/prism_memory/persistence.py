"""Layered on-disk hub: skills, notes and attempts files behind an atomic index.

Record files are content-addressed (``records-<sha>.jsonl``) and the index is
replaced last via rename, so a crash at any point leaves the previous index
pointing at complete files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .embedding import Embedder, embed
from .entropy import TokenModel
from .errors import CorruptIndex, IoFailure, SchemaVersionMismatch
from .graph import CausalGraph
from .memory import MemoryRecord, Store, StoreConfig, Tier
from .retrieval import Strategy, StrategyPopulation

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIER_DIRS = {Tier.SKILLS: "skills", Tier.NOTES: "notes", Tier.ATTEMPTS: "attempts"}


@dataclass(frozen=True)
class HubLayout:
    root: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))

    @property
    def index_file(self) -> Path:
        return self.root / "index.json"

    def tier_dir(self, tier: Tier) -> Path:
        return self.root / TIER_DIRS[tier]

    def ensure(self) -> None:
        for tier in TIER_DIRS:
            self.tier_dir(tier).mkdir(parents=True, exist_ok=True)


@dataclass
class LoadedHub:
    store: Store
    graph: CausalGraph
    model: Optional[TokenModel]
    population: Optional[StrategyPopulation]
    index_version: int
    warnings: list[str] = field(default_factory=list)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoFailure(f"writing {path}: {exc}") from exc


def _put(layout: HubLayout, rel_dir: str, stem: str, ext: str, text: str) -> str:
    data = text.encode("utf-8")
    name = f"{stem}-{hashlib.sha256(data).hexdigest()[:16]}{ext}"
    rel = f"{rel_dir}/{name}" if rel_dir else name
    path = layout.root / rel
    if not path.exists():
        _atomic_write(path, data)
    return rel


def _record_line(r: MemoryRecord) -> str:
    return json.dumps(r.persisted(), sort_keys=False, ensure_ascii=False)


def _population_text(pop: StrategyPopulation) -> str:
    return "".join(
        json.dumps([s.k_budget, s.alpha_cost, s.gamma_diversity, s.weight]) + "\n" for s in pop.strategies
    )


def save(
    store: Store,
    graph: CausalGraph,
    model: Optional[TokenModel],
    layout: HubLayout,
    index_version: int = 0,
    population: Optional[StrategyPopulation] = None,
    _crash_after: Optional[str] = None,
) -> int:
    """Write the hub; the index is rewritten last. Returns ``index_version``.

    ``_crash_after`` names a phase ("records", "mirrors", "aux") after which
    an exception is raised, for fault-injection tests.
    """
    layout.ensure()
    index: dict = {"schema_version": SCHEMA_VERSION, "index_version": index_version, "files": {}, "records": []}
    for tier, sub in TIER_DIRS.items():
        recs = store.tier(tier)
        text = "".join(_record_line(r) + "\n" for r in recs)
        index["files"][sub] = _put(layout, sub, "records", ".jsonl", text)
        index["records"].extend(r.id for r in recs)
    index["records"].sort()
    if _crash_after == "records":
        raise IoFailure("injected crash after record files")
    mirrors = []
    for r in store.tier(Tier.SKILLS):
        rel = f"skills/{r.id}.md"
        _atomic_write(layout.root / rel, (r.content + "\n").encode("utf-8"))
        mirrors.append(rel)
    index["skill_mirrors"] = mirrors
    if _crash_after == "mirrors":
        raise IoFailure("injected crash after skill mirrors")
    index["files"]["graph"] = _put(layout, "", "graph", ".jsonl", graph.dumps())
    if model is not None:
        index["files"]["model"] = _put(layout, "", "model", ".txt", model.dumps())
    if population is not None:
        index["files"]["strategies"] = _put(layout, "", "strategies", ".jsonl", _population_text(population))
    if _crash_after == "aux":
        raise IoFailure("injected crash before index rewrite")
    _atomic_write(layout.index_file, (json.dumps(index, indent=1, sort_keys=True) + "\n").encode("utf-8"))
    _collect_garbage(layout, index)
    return index_version


def _collect_garbage(layout: HubLayout, index: dict) -> None:
    keep = {layout.root / rel for rel in index["files"].values()}
    keep |= {layout.root / rel for rel in index.get("skill_mirrors", [])}
    for pattern in ("*/records-*.jsonl", "graph-*.jsonl", "model-*.txt", "strategies-*.jsonl", "skills/*.md"):
        for p in layout.root.glob(pattern):
            if p not in keep:
                p.unlink()


def read_index(layout: HubLayout) -> dict:
    try:
        index = json.loads(layout.index_file.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CorruptIndex(f"no index at {layout.index_file}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptIndex(f"{layout.index_file}: {exc}") from exc
    if index.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"index schema {index.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    return index


def _parse_record(line: str, where: str, embedder: Embedder) -> MemoryRecord:
    try:
        row = json.loads(line)
        return MemoryRecord(
            id=row["id"],
            content=row["content"],
            embedding=embed(row["content"], embedder),
            entropy=row["entropy"],
            tier=Tier(row["tier"]),
            confidence=row["confidence"],
            provenance=row["provenance"],
            fitness_window=deque((t, bool(ok)) for t, ok in row["window"]),
            retrieval_frequency=row["frequency"],
            created_at=row["created_at"],
            updated_at=row["updated_at"],
            token_count=row["tokens"],
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptIndex(f"{where}: {exc}") from exc


def load(layout: HubLayout, embedder: Embedder, cfg: Optional[StoreConfig] = None) -> LoadedHub:
    index = read_index(layout)
    warnings: list[str] = []
    records: list[MemoryRecord] = []
    indexed_files = set(index["files"].values())
    for sub in TIER_DIRS.values():
        rel = index["files"][sub]
        path = layout.root / rel
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except FileNotFoundError as exc:
            raise CorruptIndex(f"indexed file missing: {rel}") from exc
        for n, line in enumerate(lines, start=1):
            records.append(_parse_record(line, f"{rel}:{n}", embedder))
        for stray in sorted(path.parent.glob("records-*.jsonl")):
            srel = f"{sub}/{stray.name}"
            if srel not in indexed_files:
                warnings.append(f"ignored unindexed file {srel}")
    if sorted(r.id for r in records) != index["records"]:
        raise CorruptIndex("record files disagree with the index id list")
    store = Store(cfg or StoreConfig())
    store.replace_all(records)
    graph = CausalGraph()
    if "graph" in index["files"]:
        graph = CausalGraph.loads((layout.root / index["files"]["graph"]).read_text(encoding="utf-8"))
    model = None
    if "model" in index["files"]:
        model = TokenModel.load(layout.root / index["files"]["model"])
    population = None
    if "strategies" in index["files"]:
        rows = [json.loads(l) for l in (layout.root / index["files"]["strategies"]).read_text().splitlines()]
        population = StrategyPopulation([Strategy(int(k), a, g, w) for k, a, g, w in rows])
    for w in warnings:
        log.warning(w)
    return LoadedHub(store, graph, model, population, index["index_version"], warnings)


def grep_attempts(pattern: str, layout: HubLayout) -> list[str]:
    """Ids of attempts whose content contains ``pattern`` (case-insensitive), in file order."""
    if not pattern:
        raise ValueError("pattern must be non-empty")
    index = read_index(layout)
    rel = index["files"]["attempts"]
    needle = pattern.lower()
    out = []
    for n, line in enumerate((layout.root / rel).read_text(encoding="utf-8").splitlines(), start=1):
        try:
            row = json.loads(line)
        except ValueError as exc:
            raise CorruptIndex(f"{rel}:{n}: {exc}") from exc
        if needle in row["content"].lower():
            out.append(row["id"])
    return out
