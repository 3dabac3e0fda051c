"""Provenance-attributed causal graph and exploration metrics."""

from __future__ import annotations

import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .entropy import tokenize
from .errors import ExtractorFailure, InfeasibleDmin, SupportMismatch
from .extractor import Extractor

NODE_KINDS = ("person", "concept", "decision", "outcome", "solution-region")


def node_key(label: str) -> str:
    return "".join(tokenize(label)) or label.lower()


@dataclass
class Entity:
    id: str
    label: str
    kind: str = "concept"


@dataclass
class Edge:
    id: str
    src: str
    dst: str
    label: str
    provenance: str
    causal: bool = False
    strength: float = 1.0

    @property
    def key(self) -> tuple[str, str, str, bool]:
        return (self.src, self.dst, self.label, self.causal)


@dataclass
class CausalGraph:
    nodes: dict[str, Entity] = field(default_factory=dict)
    edges: dict[str, Edge] = field(default_factory=dict)
    links: dict[str, set[str]] = field(default_factory=lambda: defaultdict(set))
    _by_key: dict[tuple, str] = field(default_factory=dict, repr=False)
    _adj: dict[str, set[str]] = field(default_factory=lambda: defaultdict(set), repr=False)
    _next_edge: int = 0

    @property
    def rel_edges(self) -> list[Edge]:
        return [e for e in self.edges.values() if not e.causal]

    @property
    def causal_edges(self) -> list[Edge]:
        return [e for e in self.edges.values() if e.causal]

    def add_node(self, label: str, kind: str = "concept") -> Entity:
        key = node_key(label)
        if key not in self.nodes:
            self.nodes[key] = Entity(key, label, kind if kind in NODE_KINDS else "concept")
        return self.nodes[key]

    def add_edge(
        self, src: str, dst: str, label: str, provenance: str, causal: bool = False, strength: float = 1.0
    ) -> tuple[Edge, bool]:
        """Insert or merge an edge; returns (edge, created). Merges keep the first provenance."""
        s, d = node_key(src), node_key(dst)
        if s not in self.nodes or d not in self.nodes:
            raise KeyError(f"edge endpoint missing: {s!r} -> {d!r}")
        strength = min(1.0, max(0.0, strength))
        key = (s, d, label, causal)
        if key in self._by_key:
            edge = self.edges[self._by_key[key]]
            edge.strength = max(edge.strength, strength)
            return edge, False
        self._next_edge += 1
        edge = Edge(f"e{self._next_edge:06d}", s, d, label, provenance, causal, strength)
        self.edges[edge.id] = edge
        self._by_key[key] = edge.id
        self._adj[s].add(d)
        self._adj[d].add(s)
        return edge, True

    def link(self, node_id: str, memory_id: str) -> None:
        self.links[node_id].add(memory_id)

    def unlink_memory(self, memory_id: str) -> None:
        for mids in self.links.values():
            mids.discard(memory_id)

    def neighbors(self, node_id: str) -> set[str]:
        return set(self._adj.get(node_id, ()))

    def entities_in(self, text: str) -> set[str]:
        return {t for t in tokenize(text) if t in self.nodes}

    def memory_nodes(self, memory_id: str) -> set[str]:
        return {n for n, mids in self.links.items() if memory_id in mids}

    def edges_touching(self, memory_ids: Iterable[str]) -> list[Edge]:
        nodes: set[str] = set()
        wanted = set(memory_ids)
        for n, mids in self.links.items():
            if mids & wanted:
                nodes.add(n)
        return sorted(
            (e for e in self.edges.values() if e.src in nodes or e.dst in nodes), key=lambda e: e.id
        )

    # --- serialization -------------------------------------------------
    def dumps(self) -> str:
        lines = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            lines.append(json.dumps(["node", n.id, n.label, n.kind], ensure_ascii=False))
        for eid in sorted(self.edges):
            e = self.edges[eid]
            kind = "causal" if e.causal else "rel"
            lines.append(json.dumps([kind, e.id, e.src, e.dst, e.label, e.strength, e.provenance], ensure_ascii=False))
        for nid in sorted(self.links):
            for mid in sorted(self.links[nid]):
                lines.append(json.dumps(["link", nid, mid]))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def loads(cls, text: str) -> "CausalGraph":
        g = cls()
        for line in text.splitlines():
            row = json.loads(line)
            if row[0] == "node":
                g.nodes[row[1]] = Entity(row[1], row[2], row[3])
            elif row[0] in ("rel", "causal"):
                _, eid, s, d, label, strength, prov = row
                e = Edge(eid, s, d, label, prov, row[0] == "causal", strength)
                g.edges[eid] = e
                g._by_key[e.key] = eid
                g._adj[s].add(d)
                g._adj[d].add(s)
                g._next_edge = max(g._next_edge, int(eid[1:]))
            elif row[0] == "link":
                g.links[row[1]].add(row[2])
            else:
                raise ValueError(f"unknown graph row kind {row[0]!r}")
        return g


def causal_extract(record_id: str, content: str, graph: CausalGraph, agent: str, extractor: Extractor) -> list[Edge]:
    """Run the extractor over ``content``; returns edges that were newly created."""
    try:
        proposal = extractor.propose_graph(content)
    except ExtractorFailure:
        raise
    except Exception as exc:
        raise ExtractorFailure(str(exc)) from exc
    for ent in proposal.entities:
        graph.add_node(ent.label, ent.kind)
    new = []
    for ep in proposal.edges:
        edge, created = graph.add_edge(ep.src, ep.dst, ep.label, agent, ep.causal, ep.strength)
        if created:
            new.append(edge)
        graph.link(edge.src, record_id)
        graph.link(edge.dst, record_id)
    for ent in proposal.entities:
        graph.link(node_key(ent.label), record_id)
    for nid in graph.entities_in(content):
        graph.link(nid, record_id)
    return new


def graph_neighbors(seed_entities: Iterable[str], graph: CausalGraph, hops: int) -> set[str]:
    """Memories linked to any node within ``hops`` of a seed (edges treated as undirected)."""
    if hops < 0:
        raise ValueError("hops must be >= 0")
    seen = {s for s in seed_entities if s in graph.nodes}
    frontier = deque((s, 0) for s in sorted(seen))
    while frontier:
        node, d = frontier.popleft()
        if d == hops:
            continue
        for nb in sorted(graph.neighbors(node)):
            if nb not in seen:
                seen.add(nb)
                frontier.append((nb, d + 1))
    out: set[str] = set()
    for n in seen:
        out |= graph.links.get(n, set())
    return out


# --- exploration divergence -------------------------------------------------


@dataclass(frozen=True)
class RetrievalDistribution:
    agent: str
    probs: Mapping[str, float]
    smoothing: float = 1e-6

    @classmethod
    def from_counts(
        cls, agent: str, counts: Mapping[str, float], support: Iterable[str], smoothing: float = 1e-6
    ) -> "RetrievalDistribution":
        """Empirical distribution mixed with ``smoothing`` mass spread uniformly over ``support``."""
        support = sorted(set(support) | set(counts))
        if not support:
            raise ValueError("empty support")
        total = float(sum(counts.values()))
        u = 1.0 / len(support)
        if total == 0:
            return cls(agent, {m: u for m in support}, smoothing)
        probs = {m: (1 - smoothing) * counts.get(m, 0.0) / total + smoothing * u for m in support}
        return cls(agent, probs, smoothing)


def exploration_divergence(ri: RetrievalDistribution, rj: RetrievalDistribution) -> float:
    """KL(R_i || R_j) in bits."""
    if set(ri.probs) != set(rj.probs):
        raise SupportMismatch("distributions must share support")
    total = 0.0
    for m, p in ri.probs.items():
        if p > 0:
            q = rj.probs[m]
            if q <= 0:
                raise SupportMismatch(f"R_j({m}) = 0 where R_i > 0")
            total += p * math.log2(p / q)
    return max(0.0, total)


def mean_pairwise_divergence(dists: Sequence[RetrievalDistribution]) -> float:
    vals = [
        exploration_divergence(a, b) for i, a in enumerate(dists) for j, b in enumerate(dists) if i != j
    ]
    return float(np.mean(vals)) if vals else 0.0


# --- coverage experiment ----------------------------------------------------


def coverage_bound(n: int, k: int, dmin: float, T: int, mem_count: int) -> float:
    return n * k * (1.0 - math.exp(-dmin * T / mem_count))


def _block_distributions(n: int, mem_count: int, beta: float) -> np.ndarray:
    """Agent i up-weights its own contiguous block of the support by exp(beta)."""
    blocks = np.array_split(np.arange(mem_count), n)
    out = np.ones((n, mem_count))
    for i, blk in enumerate(blocks):
        out[i, blk] = math.exp(beta)
    return out / out.sum(axis=1, keepdims=True)


def _min_pairwise_kl_bits(p: np.ndarray) -> float:
    n = len(p)
    if n < 2:
        return math.inf
    return min(
        float(np.sum(p[i] * np.log2(p[i] / p[j]))) for i in range(n) for j in range(n) if i != j
    )


def diverse_distributions(n: int, mem_count: int, dmin: float, beta_max: float = 30.0) -> np.ndarray:
    """Smallest block tilt whose pairwise KL reaches ``dmin`` bits (bisection)."""
    if n < 1 or mem_count < n:
        raise InfeasibleDmin(f"cannot give {n} agents distinct blocks over {mem_count} memories")
    if n == 1:
        return np.full((1, mem_count), 1.0 / mem_count)
    if _min_pairwise_kl_bits(_block_distributions(n, mem_count, beta_max)) < dmin:
        raise InfeasibleDmin(f"d_min={dmin} bits unreachable with {n} agents over {mem_count} memories")
    lo, hi = 0.0, beta_max
    for _ in range(60):
        mid = (lo + hi) / 2
        if _min_pairwise_kl_bits(_block_distributions(n, mem_count, mid)) >= dmin:
            hi = mid
        else:
            lo = mid
    return _block_distributions(n, mem_count, hi)


@dataclass
class CoverageReport:
    horizons: list[int]
    empirical: list[float]
    bound: list[float]
    min_pairwise_kl: float

    @property
    def satisfied(self) -> list[bool]:
        return [e >= b for e, b in zip(self.empirical, self.bound)]


def coverage_experiment(
    n: int, k: int, horizons: Sequence[int], dmin: float, mem_count: int, seeds: int = 100, base_seed: int = 0
) -> CoverageReport:
    """Monte Carlo mean of distinct memories touched by ``n`` agents over T rounds."""
    if k > mem_count:
        raise ValueError("k cannot exceed the number of memories")
    dists = diverse_distributions(n, mem_count, dmin)
    horizons = sorted(horizons)
    t_max = horizons[-1]
    totals = np.zeros(len(horizons))
    for s in range(seeds):
        rng = np.random.default_rng(base_seed + s)
        seen = np.zeros(mem_count, dtype=bool)
        h = 0
        for t in range(1, t_max + 1):
            for i in range(n):
                seen[rng.choice(mem_count, size=k, replace=False, p=dists[i])] = True
            while h < len(horizons) and horizons[h] == t:
                totals[h] += seen.sum()
                h += 1
    return CoverageReport(
        list(horizons),
        list(totals / seeds),
        [coverage_bound(n, k, dmin, T, mem_count) for T in horizons],
        _min_pairwise_kl_bits(dists),
    )
