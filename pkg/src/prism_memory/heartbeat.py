"""Heartbeat controller: periodic reflection, threshold consolidation, plateau redirection."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import NodeNotFound, OutOfOrderTick
from .graph import CausalGraph
from .memory import Store, StoreSnapshot, Tier


@dataclass(frozen=True)
class HeartbeatConfig:
    h_r: int = 25
    nu: int = 60
    delta_plateau: float = 0.01
    lookback_n: int = 10
    t_min: int = 20

    def __post_init__(self) -> None:
        if self.h_r < 1 or self.nu < 1 or self.lookback_n < 1:
            raise ValueError("h_r, nu and lookback_n must be >= 1")
        if self.delta_plateau <= 0:
            raise ValueError("delta_plateau must be > 0")
        if self.t_min < self.lookback_n:
            raise ValueError("t_min must be >= lookback_n")


@dataclass(frozen=True)
class Intervention:
    turn: int
    kind: str  # Reflection | Consolidation | Redirection
    detail: str

    def line(self) -> str:
        return f"{self.turn}\t{self.kind}\t{self.detail}"


@dataclass(frozen=True)
class Redirect:
    node: Optional[str]
    memories: tuple[str, ...]


class HeartbeatAgent(Protocol):
    id: str
    recent_turns: list[str]
    inbox: list[Redirect]

    def stagnating(self, n: int) -> bool: ...


class StagnationDetector:
    """First-passage plateau test on mean confidence with a refractory period."""

    def __init__(self, cfg: HeartbeatConfig):
        self.cfg = cfg
        self.history: deque[tuple[int, float]] = deque(maxlen=cfg.lookback_n + 1)
        self.last_fire: Optional[int] = None

    def update(self, t: int, kbar: float) -> bool:
        self.history.append((t, kbar))
        n = self.cfg.lookback_n
        past = [k for s, k in self.history if s == t - n]
        if not past:
            return False
        if abs(kbar - past[0]) >= self.cfg.delta_plateau or t <= self.cfg.t_min:
            return False
        if self.last_fire is not None and t - self.last_fire < self.cfg.t_min:
            return False
        self.last_fire = t
        return True


def roi(node: str, graph: CausalGraph, store: Store | StoreSnapshot) -> float:
    """Unexplored-neighbour count times mean confidence of the node's memories."""
    if node not in graph.nodes:
        raise NodeNotFound(node)

    def linked(n: str) -> list:
        return [store[m] if isinstance(store, StoreSnapshot) else store.get(m) for m in sorted(graph.links.get(n, ())) if m in store]

    unexplored = sum(1 for nb in graph.neighbors(node) if sum(r.retrieval_frequency for r in linked(nb)) == 0)
    mems = linked(node)
    conf = float(np.mean([r.confidence for r in mems])) if mems else 0.5
    return unexplored * conf


def best_redirect(graph: CausalGraph, store: Store | StoreSnapshot) -> Redirect:
    if not graph.nodes:
        return Redirect(None, ())
    scores = {n: roi(n, graph, store) for n in sorted(graph.nodes)}
    target = min(scores, key=lambda n: (-scores[n], n))
    mems = sorted(
        (m for m in graph.links.get(target, ()) if m in store),
        key=lambda m: (-(store[m] if isinstance(store, StoreSnapshot) else store.get(m)).confidence, m),
    )
    return Redirect(target, tuple(mems[:3]))


@dataclass
class HeartbeatState:
    cfg: HeartbeatConfig
    turn: int = 0
    kappa_history: deque = field(default_factory=deque)
    intervention_log: list[Intervention] = field(default_factory=list)
    detector: StagnationDetector = field(init=False)

    def __post_init__(self) -> None:
        self.kappa_history = deque(self.kappa_history, maxlen=self.cfg.lookback_n + 1)
        self.detector = StagnationDetector(self.cfg)

    @property
    def last_redirect_turn(self) -> Optional[int]:
        return self.detector.last_fire

    def log_lines(self) -> str:
        return "".join(iv.line() + "\n" for iv in self.intervention_log)


def tick(
    state: HeartbeatState,
    t: int,
    store: Store,
    graph: CausalGraph,
    agents: Sequence[HeartbeatAgent],
    add_reflection: Callable[[str, str, int], object],
    run_consolidation: Callable[[int], object],
    reflect: Callable[[Sequence[str]], str],
) -> list[Intervention]:
    """Advance the controller to turn ``t`` and fire any due interventions.

    ``add_reflection(agent_id, text, t)`` stores a reflection note,
    ``run_consolidation(t)`` runs the consolidation pipeline and ``reflect``
    turns an agent's recent turns into note text.
    """
    if t <= state.turn:
        raise OutOfOrderTick(f"tick {t} after {state.turn}")
    state.turn = t
    cfg = state.cfg
    fired: list[Intervention] = []

    if t % cfg.h_r == 0:
        for agent in agents:
            text = reflect(agent.recent_turns)
            add_reflection(agent.id, text, t)
            fired.append(Intervention(t, "Reflection", f"agent={agent.id}"))

    n_notes = len(store.tier(Tier.NOTES))
    if n_notes > cfg.nu:
        run_consolidation(t)
        fired.append(Intervention(t, "Consolidation", f"notes={n_notes}"))

    kbar = sum(r.confidence for r in store) / len(store) if len(store) else 0.0
    state.kappa_history.append((t, kbar))
    if state.detector.update(t, kbar):
        target = best_redirect(graph, store.snapshot())
        stuck = [a for a in agents if a.stagnating(cfg.lookback_n)]
        for a in stuck:
            a.inbox.append(target)
        who = ",".join(a.id for a in stuck) or "none"
        fired.append(Intervention(t, "Redirection", f"node={target.node} agents={who}"))

    state.intervention_log.extend(fired)
    return fired


@dataclass
class DetectionReport:
    onset: int
    delays: list[Optional[int]]
    false_alarms: list[int]
    lookback_n: int

    @property
    def max_delay(self) -> Optional[int]:
        if any(d is None for d in self.delays):
            return None
        return max(self.delays)


def plateau_series(turns: int, onset: Optional[int], slope: float, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Mean-confidence series rising by ``slope`` per turn, flat from ``onset`` on."""
    t = np.arange(1, turns + 1)
    level = slope * (np.minimum(t, onset) if onset is not None else t)
    return level + rng.normal(0.0, noise, size=turns)


def detection_experiment(
    cfg: HeartbeatConfig,
    onset: int = 200,
    turns: int = 500,
    slope: float = 0.002,
    noise: float = 0.0005,
    seeds: Sequence[int] = range(20),
) -> DetectionReport:
    """Delay of the first firing after an injected plateau, plus alarms on plateau-free series."""
    delays: list[Optional[int]] = []
    alarms: list[int] = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        det = StagnationDetector(cfg)
        first = None
        for t, k in enumerate(plateau_series(turns, onset, slope, noise, rng), start=1):
            if det.update(t, float(k)) and first is None:
                first = t
        delays.append(None if first is None else first - onset)
        det = StagnationDetector(cfg)
        alarms.append(
            sum(det.update(t, float(k)) for t, k in enumerate(plateau_series(turns, None, slope, noise, rng), start=1))
        )
    return DetectionReport(onset, delays, alarms, cfg.lookback_n)
