"""Scripted multi-agent optimisation episodes over the shared substrate.

Per turn every agent retrieves from a turn-start snapshot, reads the
retrieved records (adopting a better solution one of them points to, and
voting on a move parameter), makes one move, scores it, closes its trace and
writes an attempt record plus, on a successful move, an improvement note.
Dynamics and the heartbeat then run once for the whole turn.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..config import PrismConfig
from ..entropy import tokenize
from ..errors import ConfigInvalid
from ..heartbeat import Redirect
from ..memory import Tier
from ..retrieval import StrategyPopulation
from ..substrate import Substrate
from .corpus import task_model
from .metrics import (
    TraceEvent,
    divergence_matrix,
    improvement_rate,
    mean_offdiagonal,
    retrieval_distributions,
    reuse_ratio,
)
from .tasks import better, make_task


@dataclass
class ScriptedAgent:
    id: str
    rng: np.random.Generator
    solution: Any
    score: float
    param: str
    recent_turns: list[str] = field(default_factory=list)
    inbox: list[Redirect] = field(default_factory=list)
    last_gain: int = 0
    now: int = 0

    def stagnating(self, n: int) -> bool:
        return self.now - self.last_gain >= n


@dataclass
class EpisodeMetrics:
    task: str
    agents: int
    turns: int
    seed: int
    minimize: bool
    best: list[float]
    ir: list[float] = field(default_factory=list)
    kr: list[float] = field(default_factory=list)
    store_size: list[int] = field(default_factory=list)
    mean_kappa: list[float] = field(default_factory=list)
    divergence_checkpoints: list[tuple[int, float]] = field(default_factory=list)
    divergence: list[list[float]] = field(default_factory=list)
    tier_counts: dict[str, int] = field(default_factory=dict)
    evals: int = 0
    interventions: dict[str, int] = field(default_factory=dict)
    strategy_weights: list[float] = field(default_factory=list)

    @property
    def improvement_rate(self) -> float:
        return improvement_rate(self.best, self.minimize)

    @property
    def final_kr(self) -> float:
        return self.kr[-1] if self.kr else 0.0

    @property
    def mean_divergence(self) -> float:
        return mean_offdiagonal(self.divergence)

    @property
    def best_score(self) -> float:
        return self.best[-1]

    def summary(self) -> dict:
        return {
            "task": self.task,
            "agents": self.agents,
            "turns": self.turns,
            "seed": self.seed,
            "IR": round(self.improvement_rate, 6),
            "KR": round(self.final_kr, 6),
            "best": round(self.best_score, 6),
            "evals": self.evals,
            "mean_D": round(self.mean_divergence, 6),
            "store_size": self.store_size[-1] if self.store_size else 0,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["turn", "best", "ir", "kr", "store_size", "mean_kappa"])
        w.writerow([0, f"{self.best[0]:.6f}", "", "", "", ""])
        for t in range(self.turns):
            w.writerow([t + 1, f"{self.best[t + 1]:.6f}", f"{self.ir[t]:.6f}", f"{self.kr[t]:.6f}",
                        self.store_size[t], f"{self.mean_kappa[t]:.6f}"])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        rows = [{"kind": "summary", **self.summary()}]
        rows.append({"kind": "tiers", **self.tier_counts})
        rows.append({"kind": "interventions", **self.interventions})
        rows.append({"kind": "divergence", "matrix": [[round(v, 6) for v in row] for row in self.divergence]})
        for t, d in self.divergence_checkpoints:
            rows.append({"kind": "divergence_checkpoint", "turn": t, "mean_D": round(d, 6)})
        rows.append({"kind": "strategy_weights", "weights": [round(w, 6) for w in self.strategy_weights]})
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)

    def digest(self) -> str:
        return hashlib.sha256((self.to_csv() + self.to_jsonl()).encode("utf-8")).hexdigest()


def _fmt(score: float) -> str:
    return f"{score:.1f}" if abs(score) >= 10 else f"{score:.4f}"


class Episode:
    """One run; keeps the substrate and agents around for inspection after :meth:`run`."""

    def __init__(self, cfg: PrismConfig, seed: int, agents: Optional[int] = None, turns: Optional[int] = None,
                 divergence_every: int = 50):
        n_agents = cfg.agents if agents is None else agents
        n_turns = cfg.turns if turns is None else turns
        if n_agents < 1 or n_turns < 0:
            raise ConfigInvalid("need at least one agent and a non-negative turn count")
        self.cfg = cfg
        self.seed = seed
        self.turns = n_turns
        self.divergence_every = divergence_every
        self.task = make_task(cfg.task, cfg.n_cities, cfg.n_circles, seed)
        self.params = list(self.task.params)
        model = task_model(self.params, self.task.objective_token, cfg.smoothing_alpha)
        population = None if cfg.evolutionary_voi else StrategyPopulation.single()
        self.sub = Substrate(cfg, model, population=population)
        self._seed_domain()
        solution, score = self.task.initial()
        self.initial_score = score
        self.agents = [
            ScriptedAgent(str(i), np.random.default_rng([seed, 1000 + i]), solution.copy(), score,
                          self.params[i % len(self.params)])
            for i in range(n_agents)
        ]
        self.archive: dict[str, tuple[float, Any]] = {}
        self.note_ids: dict[str, str] = {}
        self.events: list[TraceEvent] = []
        self.evals = 0

    def _seed_domain(self) -> None:
        g = self.sub.graph
        obj = self.task.objective_token
        g.add_node(obj, "outcome")
        for p in self.params:
            g.add_node(p, "decision")
            g.add_edge(p, obj, "tunes", "seed")
        for p in self.params:
            self.sub.seed(p, Tier.SKILLS)

    # --- one agent turn ---------------------------------------------------
    def _choose_param(self, agent: ScriptedAgent, records: list) -> str:
        for red in agent.inbox:
            if red.node in self.task.params:
                agent.inbox.clear()
                return red.node
        agent.inbox.clear()
        votes = np.zeros(len(self.params))
        for r in records:
            toks = set(tokenize(r.content))
            w = r.confidence * (2.0 if "improved" in toks else 1.0)
            for i, p in enumerate(self.params):
                if p in toks:
                    votes[i] += w
        if votes.sum() <= 0:
            return self.params[int(agent.rng.integers(len(self.params)))]
        return self.params[int(agent.rng.choice(len(self.params), p=votes / votes.sum()))]

    def _agent_turn(self, agent: ScriptedAgent, snap, t: int) -> None:
        sub, task = self.sub, self.task
        agent.now = t
        start = agent.score
        trace = sub.retrieve(f"{agent.param} improved", agent.id, snap, agent.rng, t)
        records = [snap[rid] for rid in trace.retrieved]
        self.events.append(TraceEvent(t, agent.id, tuple(trace.retrieved), tuple(r.provenance for r in records)))

        pointers = [self.archive[rid] for rid in trace.retrieved if rid in self.archive]
        if pointers:
            score, sol = min(pointers, key=lambda p: p[0]) if task.minimize else max(pointers, key=lambda p: p[0])
            if better(score, agent.score, task.minimize):
                agent.solution, agent.score = sol, score

        agent.param = self._choose_param(agent, records)
        cand, score = task.propose(agent.solution, agent.param, agent.rng, agent.score)
        self.evals += 1
        moved = better(score, agent.score, task.minimize)
        if moved:
            agent.solution, agent.score = cand, score
        if better(agent.score, start, task.minimize):
            agent.last_gain = t
        sub.close(trace, 1.0 if better(agent.score, start, task.minimize) else 0.0, now=t)

        outcome = "improved" if moved else "failed"
        text = f"attempt {agent.param} {outcome} score={_fmt(score)}."
        if moved:
            text += f" {agent.param} improved."
        agent.recent_turns = (agent.recent_turns + [text])[-self.cfg.h_r :]
        for cand_text in sub.extractor.extract("", text):
            delta = sub.write_memory(cand_text.text, agent.id, t)
            if not moved:
                continue
            entry = (score, agent.solution)
            if cand_text.kind == "attempt":
                for rid in delta.created:
                    self.archive[rid] = entry
            else:
                rid = delta.created[0] if delta.created else self._note_id(cand_text.text)
                if rid is not None:
                    old = self.archive.get(rid)
                    if old is None or better(score, old[0], task.minimize):
                        self.archive[rid] = entry

    def _note_id(self, text: str) -> Optional[str]:
        content = " ".join(text.split())
        rid = self.note_ids.get(content)
        store = self.sub.store
        if rid is not None and rid in store and store.get(rid).content == content:
            return rid
        for r in store:
            if r.content == content:
                self.note_ids[content] = r.id
                return r.id
        return None

    # --- episode ----------------------------------------------------------
    def run(self) -> EpisodeMetrics:
        task = self.task
        m = EpisodeMetrics(task.name, len(self.agents), self.turns, self.seed, task.minimize, [self.initial_score])
        authors = [a.id for a in self.agents]
        interventions: Counter = Counter()
        for t in range(1, self.turns + 1):
            snap = self.sub.store.snapshot()
            for agent in self.agents:
                self._agent_turn(agent, snap, t)
            turn_events = self.events[-len(self.agents):]
            for iv in self.sub.end_turn(t, self.agents):
                interventions[iv.kind] += 1
            if t % 50 == 0:
                live = set(self.sub.store.ids())
                self.archive = {k: v for k, v in self.archive.items() if k in live}
            scores = [a.score for a in self.agents] + [m.best[-1]]
            m.best.append(min(scores) if task.minimize else max(scores))
            m.ir.append(improvement_rate(m.best, task.minimize))
            m.kr.append(float(np.mean([reuse_ratio(e.agent, e.provenance, authors) for e in turn_events])))
            m.store_size.append(len(self.sub.store))
            m.mean_kappa.append(_mean_kappa(self.sub.store))
            if self.divergence_every and t % self.divergence_every == 0:
                dists = retrieval_distributions(self.events, authors)
                m.divergence_checkpoints.append((t, mean_offdiagonal(divergence_matrix(dists))))
        m.divergence = divergence_matrix(retrieval_distributions(self.events, authors))
        m.tier_counts = {t.name.lower(): len(self.sub.store.tier(t)) for t in Tier}
        m.evals = self.evals
        m.interventions = dict(sorted(interventions.items()))
        m.strategy_weights = [float(w) for w in self.sub.population.weights]
        return m


def _mean_kappa(store) -> float:
    n = len(store)
    return sum(r.confidence for r in store) / n if n else 0.0


def run_episode(cfg: PrismConfig, seed: int = 0, agents: Optional[int] = None, turns: Optional[int] = None
                ) -> EpisodeMetrics:
    """Run one episode of ``cfg.task``; ``agents``/``turns`` override the config."""
    return Episode(cfg, seed, agents, turns).run()
