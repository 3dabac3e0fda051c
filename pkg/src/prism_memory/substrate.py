"""The assembled memory substrate: write pipeline, retrieval and per-turn upkeep."""

from __future__ import annotations

import itertools
import logging
from typing import Optional, Sequence

import numpy as np

from . import dynamics as dyn
from .config import PrismConfig
from .consolidation import ConsolidationReport, consolidate
from .embedding import Embedder, embed, top_k
from .entropy import TokenModel, as_tokens, entropy
from .extractor import Extractor, RuleExtractor
from .graph import CausalGraph, causal_extract
from .heartbeat import HeartbeatAgent, HeartbeatState, Intervention, tick
from .memory import MemoryRecord, OpKind, Store, StoreDelta, Tier, UpdateOp, apply_update, assign_tier, prune_below_threshold
from .retrieval import Retriever, RetrievalTrace, Strategy, StrategyPopulation, hedge_eta

log = logging.getLogger(__name__)


class Substrate:
    """Store, graph, strategies and controllers wired together for one run."""

    def __init__(
        self,
        cfg: PrismConfig,
        model: TokenModel,
        extractor: Optional[Extractor] = None,
        population: Optional[StrategyPopulation] = None,
        horizon: Optional[int] = None,
    ):
        self.cfg = cfg
        self.model = model
        self.extractor = extractor or RuleExtractor()
        self.embedder = Embedder(cfg.embedding_dim, cfg.embedding_seed)
        self.store = Store(cfg.store())
        self.graph = CausalGraph()
        self.dyn_cfg = cfg.dynamics()
        self.retriever = Retriever(self.embedder, cfg.retrieval())
        if population is None:
            grid = itertools.product(cfg.strategy_k, cfg.strategy_alpha, cfg.strategy_gamma)
            population = StrategyPopulation([Strategy(int(k), a, min(1.0, g * cfg.gamma_scale)) for k, a, g in grid])
        self.population = population
        self.eta = cfg.eta if horizon is None else hedge_eta(max(2, len(population)), max(1, horizon))
        self.heartbeat = HeartbeatState(cfg.heartbeat())
        self.index_version = 0
        self.consolidations: list[ConsolidationReport] = []

    # --- record construction ------------------------------------------
    def make_record(self, content: str, agent: str, now: int) -> MemoryRecord:
        content = " ".join(content.split())
        toks = as_tokens(content)
        h = entropy(toks, self.model)
        return MemoryRecord(
            id=self.store.new_id(),
            content=content,
            embedding=embed(toks, self.embedder),
            entropy=h,
            tier=assign_tier(h, 0, self.store.cfg),
            confidence=self.store.cfg.kappa0,
            provenance=agent,
            created_at=now,
            updated_at=now,
            token_count=len(toks),
        )

    def write_memory(self, content: str, agent: str, now: int, tier: Optional[Tier] = None) -> StoreDelta:
        """Embed, decide an update op against the nearest neighbours, apply, tier and link."""
        rec = self.make_record(content, agent, now)
        neigh = top_k(rec.embedding, self.store, self.store.cfg.neighbor_count)
        op = self.extractor.decide(rec.content, [(rid, self.store.get(rid).content, c) for rid, c in neigh])
        delta = StoreDelta()
        if op.kind is OpKind.DELETE:
            delta.extend(apply_update(op, rec, self.store, now))
            self.graph.unlink_memory(op.target_id)
            op = UpdateOp(OpKind.ADD, new_content=rec.content)
        if op.kind is OpKind.NOOP:
            return delta
        delta.extend(apply_update(op, rec, self.store, now))
        touched = delta.created or delta.modified
        for rid in touched:
            r = self.store.get(rid)
            r.tier = tier if tier is not None else assign_tier(r.entropy, r.retrieval_frequency, self.store.cfg)
            causal_extract(rid, r.content, self.graph, agent, self.extractor)
        return delta

    def write_turn(
        self, agent: str, user_turn: str, agent_turn: str, now: int, summary: str = "", recent: Sequence[str] = ()
    ) -> StoreDelta:
        delta = StoreDelta()
        for cand in self.extractor.extract(user_turn, agent_turn, summary, recent):
            delta.extend(self.write_memory(cand.text, agent, now))
        return delta

    def seed(self, content: str, tier: Tier, provenance: str = "seed", confidence: Optional[float] = None) -> str:
        """Insert a record directly (bypassing the update decision), e.g. for initial skills."""
        rec = self.make_record(content, provenance, 0)
        rec.tier = tier
        if confidence is not None:
            rec.confidence = confidence
        self.store.insert(rec)
        causal_extract(rec.id, rec.content, self.graph, provenance, self.extractor)
        return rec.id

    # --- retrieval ----------------------------------------------------
    def retrieve(self, query: str, agent: str, snapshot, rng: np.random.Generator, turn: int,
                 population: Optional[StrategyPopulation] = None) -> RetrievalTrace:
        return self.retriever.retrieve(query, agent, snapshot, self.graph, population or self.population, rng, turn)

    def close(self, trace: RetrievalTrace, reward: float, population: Optional[StrategyPopulation] = None,
              now: Optional[int] = None) -> None:
        self.retriever.close_trace(trace.trace_id, reward, population or self.population, self.eta, self.store, now)
        self.retriever.forget(trace.trace_id)

    # --- per-turn upkeep ----------------------------------------------
    def end_turn(self, t: int, agents: Sequence[HeartbeatAgent] = ()) -> list[Intervention]:
        """Dynamics step, prune, re-stratify, then the heartbeat."""
        if len(self.store):
            dyn.apply_step(self.store, self.dyn_cfg, t)
        pruned = prune_below_threshold(self.store, self.cfg.epsilon_prune)
        for rid in pruned:
            self.graph.unlink_memory(rid)
        self.store.restratify(t, self.cfg.fitness_window_w)
        return tick(
            self.heartbeat,
            t,
            self.store,
            self.graph,
            agents,
            add_reflection=lambda aid, text, now: self.write_memory(text, aid, now, tier=Tier.NOTES),
            run_consolidation=self.consolidate,
            reflect=self.extractor.reflect,
        )

    def consolidate(self, t: int) -> ConsolidationReport:
        report = consolidate(
            self.store,
            self.graph,
            self.model,
            self.extractor,
            self.embedder,
            self.cfg.consolidation(),
            now=t,
            index_version=self.index_version,
        )
        self.index_version = report.index_version
        self.consolidations.append(report)
        return report
