"""Value-of-information retrieval driven by an exponentially weighted strategy population."""

from __future__ import annotations

import itertools
import math
import re
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .embedding import Embedder, embed
from .entropy import tokenize
from .errors import EmptyPopulation, RewardOutOfRange, TraceAlreadyClosed, TraceNotFound
from .graph import CausalGraph, graph_neighbors
from .memory import MemoryRecord, Store, StoreSnapshot, Tier


@dataclass
class Strategy:
    k_budget: int
    alpha_cost: float
    gamma_diversity: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.k_budget < 0 or self.alpha_cost < 0 or not 0 <= self.gamma_diversity <= 1:
            raise ValueError(f"invalid strategy parameters {self}")


@dataclass
class StrategyPopulation:
    strategies: list[Strategy]

    def __post_init__(self) -> None:
        self.normalize()

    @classmethod
    def default(cls) -> "StrategyPopulation":
        grid = itertools.product((4, 16), (0.5, 2.0), (0.0, 0.5))
        return cls([Strategy(k, a, g) for k, a, g in grid])

    @classmethod
    def single(cls, k_budget: int = 8, alpha_cost: float = 0.5, gamma: float = 0.0) -> "StrategyPopulation":
        return cls([Strategy(k_budget, alpha_cost, gamma)])

    def __len__(self) -> int:
        return len(self.strategies)

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.strategies])

    def normalize(self) -> None:
        total = sum(s.weight for s in self.strategies)
        if total <= 0 or not math.isfinite(total):
            raise ValueError("strategy weights must have a positive finite sum")
        for s in self.strategies:
            s.weight /= total

    def sample(self, rng: np.random.Generator) -> int:
        if not self.strategies:
            raise EmptyPopulation("no strategies")
        w = self.weights
        return int(rng.choice(len(w), p=w / w.sum()))

    def update(self, j: int, reward: float, eta: float) -> None:
        """w_j <- w_j * exp(eta * reward), then renormalise."""
        self.strategies[j].weight *= math.exp(eta * reward)
        self.normalize()

    def update_all(self, rewards: Sequence[float], eta: float) -> None:
        for s, r in zip(self.strategies, rewards):
            s.weight *= math.exp(eta * r)
        self.normalize()

    def copy(self) -> "StrategyPopulation":
        return StrategyPopulation([Strategy(s.k_budget, s.alpha_cost, s.gamma_diversity, s.weight) for s in self.strategies])


def hedge_eta(k: int, horizon: int) -> float:
    return math.sqrt(2 * math.log(k) / horizon)


@dataclass
class RetrievalTrace:
    trace_id: str
    agent: str
    query: str
    strategy: int
    retrieved: list[str]
    stages: dict[str, str]
    gains: dict[str, float]
    evoi_final: float
    turn: int = 0
    open: bool = True
    reward: Optional[float] = None

    def section(self, stage: str) -> list[str]:
        return [rid for rid in self.retrieved if self.stages[rid] == stage]

    def non_skills(self) -> list[str]:
        return [rid for rid in self.retrieved if self.stages[rid] != "skills"]


@dataclass(frozen=True)
class RetrievalConfig:
    theta_min: float = 0.2
    success_threshold: float = 0.5
    graph_hops: int = 2
    ann_multiplier: int = 3
    use_graph: bool = True
    use_tier3: bool = True


def evoi(
    candidate: MemoryRecord,
    selected: Sequence[MemoryRecord],
    query: np.ndarray,
    gamma: float,
    graph_hits: Iterable[str] = (),
) -> float:
    """Marginal value: conf * relevance * novelty + gamma * graph bonus."""
    relevance = float(np.dot(query, candidate.embedding))
    if selected:
        novelty = 1.0 - max(float(np.dot(candidate.embedding, s.embedding)) for s in selected)
    else:
        novelty = 1.0
    bonus = 1.0 if candidate.id in set(graph_hits) else 0.0
    return candidate.confidence * relevance * novelty + gamma * bonus


def _greedy(
    pool: list[MemoryRecord],
    selected: list[MemoryRecord],
    query: np.ndarray,
    strat: Strategy,
    graph_hits: set[str],
    budget: int,
) -> list[tuple[MemoryRecord, float]]:
    """Greedy ratio selection; mutates ``selected``; returns accepted (record, gain)."""
    accepted = []
    pool = sorted(pool, key=lambda r: r.id)
    if not pool or budget <= 0:
        return accepted
    emb = np.stack([r.embedding for r in pool])
    rel = emb @ query
    conf = np.array([r.confidence for r in pool])
    bonus = np.array([1.0 if r.id in graph_hits else 0.0 for r in pool]) * strat.gamma_diversity
    cost = np.array([r.token_count + strat.alpha_cost for r in pool], dtype=float)
    if selected:
        max_sim = (emb @ np.stack([s.embedding for s in selected]).T).max(axis=1)
    else:
        max_sim = np.full(len(pool), -np.inf)
    alive = np.ones(len(pool), dtype=bool)
    while len(accepted) < budget and alive.any():
        novelty = np.where(np.isfinite(max_sim), 1.0 - max_sim, 1.0)
        gain = conf * rel * novelty + bonus
        ratio = np.where(alive, gain / cost, -np.inf)
        i = int(np.argmax(ratio))  # first max -> lowest id on ties
        if gain[i] <= 0:
            break
        accepted.append((pool[i], float(gain[i])))
        selected.append(pool[i])
        alive[i] = False
        max_sim = np.maximum(max_sim, emb @ pool[i].embedding)
    return accepted


def grep_records(query: str, records: Iterable[MemoryRecord]) -> list[MemoryRecord]:
    """Records whose content contains any query token (case-insensitive substring)."""
    toks = [t for t in dict.fromkeys(tokenize(query)) if len(t) >= 2]
    if not toks:
        return []
    out = []
    for r in records:
        low = r.content.lower()
        if any(t in low for t in toks):
            out.append(r)
    return out


class Retriever:
    """Runs retrievals and owns the open-trace registry shared by all agents."""

    def __init__(self, embedder: Embedder, cfg: Optional[RetrievalConfig] = None):
        self.embedder = embedder
        self.cfg = cfg or RetrievalConfig()
        self.traces: dict[str, RetrievalTrace] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def _next_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"t{self._counter:07d}"

    def retrieve(
        self,
        query: str,
        agent: str,
        snapshot: StoreSnapshot,
        graph: CausalGraph,
        population: StrategyPopulation,
        rng: np.random.Generator,
        turn: int = 0,
        strategy: Optional[int] = None,
    ) -> RetrievalTrace:
        if len(population) == 0:
            raise EmptyPopulation("strategy population is empty")
        j = population.sample(rng) if strategy is None else strategy
        strat = population.strategies[j]
        q = embed(query, self.embedder) if tokenize(query) else np.zeros(self.embedder.dim)

        skills = list(snapshot.tier(Tier.SKILLS))
        selected: list[MemoryRecord] = list(skills)
        stages = {r.id: "skills" for r in skills}
        gains: dict[str, float] = {}
        order = [r.id for r in skills]

        notes = snapshot.tier(Tier.NOTES)
        pool: dict[str, MemoryRecord] = {}
        n_ann = self.cfg.ann_multiplier * strat.k_budget
        if notes and n_ann > 0:
            mat = np.stack([r.embedding for r in notes])
            sims = mat @ q
            # only notes that actually point towards the query count as ANN hits
            for i in sorted(range(len(notes)), key=lambda i: (-sims[i], notes[i].id))[:n_ann]:
                if sims[i] > 0:
                    pool[notes[i].id] = notes[i]
        ann_ids = set(pool)
        hits: set[str] = set()
        if self.cfg.use_graph and strat.k_budget > 0:
            hits = graph_neighbors(graph.entities_in(query), graph, self.cfg.graph_hops)
            for rid in sorted(hits):
                if rid in snapshot and snapshot[rid].tier == Tier.NOTES:
                    pool.setdefault(rid, snapshot[rid])
        for rid in stages:
            pool.pop(rid, None)

        stage_of = {rid: "ann" if rid in ann_ids else "graph" for rid in pool}

        for rec, g in _greedy(list(pool.values()), selected, q, strat, hits, strat.k_budget):
            stages[rec.id] = stage_of[rec.id]
            gains[rec.id] = g
            order.append(rec.id)
        total = sum(gains.values())

        remaining = strat.k_budget - len(gains)
        if self.cfg.use_tier3 and total < self.cfg.theta_min and remaining > 0:
            tier3 = [r for r in grep_records(query, snapshot.tier(Tier.ATTEMPTS)) if r.id not in stages]
            for rec, g in _greedy(tier3, selected, q, strat, hits, remaining):
                stages[rec.id] = "tier3"
                gains[rec.id] = g
                order.append(rec.id)
            total = sum(gains.values())

        trace = RetrievalTrace(self._next_id(), agent, query, j, order, stages, gains, total, turn)
        with self._lock:
            self.traces[trace.trace_id] = trace
        return trace

    def close_trace(
        self,
        trace_id: str,
        reward: float,
        population: StrategyPopulation,
        eta: float,
        store: Optional[Store] = None,
        now: Optional[int] = None,
    ) -> StrategyPopulation:
        """Reward the strategy used by the trace and log outcomes into fitness windows."""
        try:
            trace = self.traces[trace_id]
        except KeyError:
            raise TraceNotFound(trace_id) from None
        if not trace.open:
            raise TraceAlreadyClosed(trace_id)
        if not 0.0 <= reward <= 1.0:
            raise RewardOutOfRange(reward)
        population.update(trace.strategy, reward, eta)
        if store is not None:
            ok = reward >= self.cfg.success_threshold
            t = trace.turn if now is None else now

            def _log(s: Store) -> None:
                for rid in trace.retrieved:
                    if rid in s:
                        s.get(rid).record_outcome(t, ok)

            store.write(_log)
        trace.open = False
        trace.reward = reward
        return population

    def forget(self, trace_id: str) -> None:
        self.traces.pop(trace_id, None)


# --- prompt block -----------------------------------------------------------

_NOTE_LINE = re.compile(r"^(?P<content>.*) \((?P<conf>\d+\.\d{2}), (?P<agent>[^()]*)\)$")


def assemble_prompt(trace: RetrievalTrace, snapshot: StoreSnapshot | Store, graph: CausalGraph) -> str:
    """Render the retrieved set as a <memory_context> block."""

    def rec(rid: str) -> Optional[MemoryRecord]:
        return snapshot.records.get(rid) if isinstance(snapshot, StoreSnapshot) else (
            snapshot.get(rid) if rid in snapshot else None
        )

    lines = ["<memory_context>", "[SKILLS]"]
    for rid in sorted(trace.section("skills")):
        r = rec(rid)
        if r is not None:
            lines.append(_one_line(r.content))
    lines.append("[NOTES]")
    for rid in sorted(trace.non_skills(), key=lambda x: (-trace.gains.get(x, 0.0), x)):
        r = rec(rid)
        if r is not None:
            lines.append(f"{_one_line(r.content)} ({r.confidence:.2f}, {r.provenance})")
    lines.append("[CAUSAL]")
    for e in graph.edges_touching(trace.retrieved):
        if e.causal:
            lines.append(_one_line(e.label))
    lines.append("</memory_context>")
    return "\n".join(lines)


def _one_line(text: str) -> str:
    return " ".join(text.split())


@dataclass
class ParsedPrompt:
    skills: list[str] = field(default_factory=list)
    notes: list[tuple[str, float, str]] = field(default_factory=list)
    causal: list[str] = field(default_factory=list)


def parse_prompt(block: str) -> ParsedPrompt:
    lines = block.splitlines()
    if not lines or lines[0] != "<memory_context>" or lines[-1] != "</memory_context>":
        raise ValueError("not a memory_context block")
    out = ParsedPrompt()
    section = None
    for line in lines[1:-1]:
        if line in ("[SKILLS]", "[NOTES]", "[CAUSAL]"):
            section = line
        elif section == "[SKILLS]":
            out.skills.append(line)
        elif section == "[NOTES]":
            m = _NOTE_LINE.match(line)
            if not m:
                raise ValueError(f"malformed note line {line!r}")
            out.notes.append((m["content"], float(m["conf"]), m["agent"]))
        elif section == "[CAUSAL]":
            out.causal.append(line)
        else:
            raise ValueError(f"line outside any section: {line!r}")
    return out


# --- regret experiment ------------------------------------------------------


@dataclass
class RegretReport:
    bound: float
    regrets: list[float]

    @property
    def passed(self) -> bool:
        return all(r <= self.bound for r in self.regrets)


def adversarial_rewards(K: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Piecewise schedule whose best arm switches at random phase boundaries."""
    rewards = np.empty((T, K))
    t = 0
    while t < T:
        length = int(rng.integers(T // 50, T // 5 + 1))
        good = int(rng.integers(K))
        base = rng.uniform(0.2, 0.6, size=K)
        base[good] = rng.uniform(0.6, 0.95)
        end = min(T, t + length)
        rewards[t:end] = (rng.random((end - t, K)) < base).astype(float)
        t = end
    return rewards


def hedge_regret_experiment(K: int = 8, T: int = 10_000, seeds: Sequence[int] = range(20)) -> RegretReport:
    """Full-information exponential weights against an adaptive adversary.

    The adversary zeroes the reward of the currently heaviest strategy with
    probability 1/2 each round. Regret uses the mixture's expected reward.
    """
    eta = hedge_eta(K, T)
    regrets = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        base = adversarial_rewards(K, T, rng)
        pop = StrategyPopulation([Strategy(1, 0.0, 0.0) for _ in range(K)])
        earned = 0.0
        totals = np.zeros(K)
        for t in range(T):
            w = pop.weights
            r = base[t].copy()
            if rng.random() < 0.5:
                r[int(np.argmax(w))] = 0.0
            earned += float(np.dot(w, r))
            totals += r
            pop.update_all(r, eta)
        regrets.append(float(totals.max() - earned))
    return RegretReport(math.sqrt(2 * T * math.log(K)), regrets)
