"""Parameter sweeps and episode artifacts (metrics tables, logs, manifests)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..config import PrismConfig
from ..memory import Tier
from ..retrieval import StrategyPopulation
from .episode import Episode, EpisodeMetrics


def precision_at_k(episode: Episode, k: int = 5) -> float:
    """Retrieval precision on labelled queries against the episode's final store.

    One query per move parameter ("<param> improved"); a retrieved record is
    relevant when it mentions that parameter. Always-loaded skills count as
    retrieved, so a bloated skills tier lowers precision.
    """
    sub = episode.sub
    snap = sub.store.snapshot()
    pop = StrategyPopulation.single(k_budget=k)
    rng = np.random.default_rng(0)
    scores = []
    for p in episode.params:
        tr = sub.retriever.retrieve(f"{p} improved", "probe", snap, sub.graph, pop, rng)
        sub.retriever.forget(tr.trace_id)
        if not tr.retrieved:
            scores.append(0.0)
            continue
        hits = sum(p in snap[rid].content.split() or p in snap[rid].content for rid in tr.retrieved)
        scores.append(hits / len(tr.retrieved))
    return float(np.mean(scores))


@dataclass
class SweepRow:
    params: dict[str, Any]
    ir: float
    store_size: float
    j_proxy: float
    skills: float
    runs: list[dict] = field(default_factory=list)

    def flat(self) -> dict:
        return {**self.params, "IR": round(self.ir, 6), "store_size": round(self.store_size, 3),
                "j_proxy": round(self.j_proxy, 6), "skills": round(self.skills, 3)}


def sweep(
    grid: Sequence[Mapping[str, Any]],
    base: PrismConfig,
    seeds: Sequence[int],
    agents: Optional[int] = None,
    turns: Optional[int] = None,
    sort_key: Optional[str] = None,
) -> list[SweepRow]:
    """Run every grid cell for every seed; rows sorted by the swept parameter."""
    if not grid:
        raise ValueError("grid must be non-empty")
    rows = []
    for cell in grid:
        cfg = base.replace(**cell)
        irs, sizes, js, skills, runs = [], [], [], [], []
        for seed in seeds:
            ep = Episode(cfg, seed, agents, turns)
            m = ep.run()
            irs.append(m.improvement_rate)
            sizes.append(m.store_size[-1] if m.store_size else len(ep.sub.store))
            js.append(precision_at_k(ep))
            skills.append(len(ep.sub.store.tier(Tier.SKILLS)))
            runs.append(m.summary())
        rows.append(SweepRow(dict(cell), float(np.mean(irs)), float(np.mean(sizes)), float(np.mean(js)),
                             float(np.mean(skills)), runs))
    key = sort_key or next(iter(grid[0]), None)
    if key is not None:
        rows.sort(key=lambda r: (r.params.get(key, 0), tuple(sorted(r.params.items()))))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    if not rows:
        return ""
    cols = list(rows[0].flat())
    lines = [",".join(cols)]
    for r in rows:
        flat = r.flat()
        lines.append(",".join(str(flat[c]) for c in cols))
    return "\n".join(lines) + "\n"


# --- artifacts --------------------------------------------------------------


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_episode(metrics: EpisodeMetrics, out_dir: Path, stem: Optional[str] = None) -> list[Path]:
    """One CSV of per-turn series and one JSONL log per episode."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{metrics.task}-a{metrics.agents}-s{metrics.seed}"
    csv_path = out_dir / f"{stem}.csv"
    log_path = out_dir / f"{stem}.jsonl"
    csv_path.write_text(metrics.to_csv(), encoding="utf-8")
    log_path.write_text(metrics.to_jsonl(), encoding="utf-8")
    return [csv_path, log_path]


@dataclass
class RunManifest:
    command: str
    config: dict
    config_path: Optional[str]
    seeds: list[int]
    out_dir: str
    artifacts: dict[str, str] = field(default_factory=dict)

    def dumps(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "config": self.config,
                "config_path": self.config_path,
                "seeds": self.seeds,
                "out_dir": self.out_dir,
                "artifacts": self.artifacts,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        return cls(data["command"], data["config"], data.get("config_path"), list(data["seeds"]),
                   data["out_dir"], dict(data.get("artifacts", {})))


# --- memoryless reference -----------------------------------------------------


def shared_search_ceiling(cfg: PrismConfig, seed: int, agents: int, turns: Optional[int] = None) -> float:
    """Improvement rate of an idealised team that shares its best solution perfectly.

    Every turn each of ``agents`` hill climbers proposes one move from the
    current global best with a uniformly random parameter; the best proposal
    is kept if it improves. No memory is involved, so this is an upper
    reference for what sharing alone can add to the per-turn improvement rate
    on the task's landscape.
    """
    from .tasks import better, make_task
    from .metrics import improvement_rate

    task = make_task(cfg.task, cfg.n_cities, cfg.n_circles, seed)
    params = list(task.params)
    rng = np.random.default_rng([seed, 0x5C])
    sol, score = task.initial()
    series = [score]
    for _ in range(cfg.turns if turns is None else turns):
        best_sol, best_score = sol, score
        for _ in range(agents):
            cand, s = task.propose(sol, params[int(rng.integers(len(params)))], rng, score)
            if better(s, best_score, task.minimize):
                best_sol, best_score = cand, s
        sol, score = best_sol, best_score
        series.append(score)
    return improvement_rate(series, task.minimize)
