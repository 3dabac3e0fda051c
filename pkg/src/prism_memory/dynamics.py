"""Replicator-decay confidence dynamics.

Each step moves every confidence by

    dk_i = k_i (f_i - f_bar) - lambda k_i + mu

with f_bar the confidence-weighted mean fitness, then clamps to [0, 1].
Besides the store-facing :func:`step`, the module carries the array-level
experiments used to check convergence, invasion resistance and the store
size bound.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import NotQuiescent
from .memory import MemoryRecord, Store, StoreSnapshot

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DynamicsConfig:
    lambda_decay: float = 0.01
    mu_mutation: float = 0.005
    dt: float = 1.0
    fitness_window_w: int = 50
    fitness_epsilon: float = 0.1
    esms_tolerance: float = 0.01
    quiescence_steps: int = 50

    def __post_init__(self) -> None:
        if self.lambda_decay <= 0 or self.mu_mutation <= 0 or self.dt <= 0:
            raise ValueError("lambda_decay, mu_mutation and dt must be > 0")
        if self.fitness_window_w < 1:
            raise ValueError("fitness_window_w must be >= 1")
        if self.mu_mutation / self.lambda_decay > 1:
            log.warning("mu/lambda > 1: every confidence saturates at 1, residency threshold is vacuous")

    @property
    def floor(self) -> float:
        """Confidence an unselected memory settles at (mu / lambda, capped at 1)."""
        return min(1.0, self.mu_mutation / self.lambda_decay)


def fitness(record: MemoryRecord, now: int, cfg: DynamicsConfig) -> float:
    """Windowed success rate: successes / (retrievals + eps) over [now - w, now]."""
    succ, total = record.window_counts(now, cfg.fitness_window_w)
    if total == 0:
        return 0.0
    return succ / (total + cfg.fitness_epsilon)


def mean_fitness(kappa: np.ndarray, f: np.ndarray) -> float:
    s = float(kappa.sum())
    if s == 0.0:
        return 0.0
    return float(np.dot(kappa, f) / s)


def replicator_decay_step(kappa: np.ndarray, f: np.ndarray, cfg: DynamicsConfig) -> np.ndarray:
    """One explicit Euler step, clamped to [0, 1]."""
    fbar = mean_fitness(kappa, f)
    drift = kappa * (f - fbar) - cfg.lambda_decay * kappa + cfg.mu_mutation
    return np.clip(kappa + cfg.dt * drift, 0.0, 1.0)


def step(store: Store | StoreSnapshot, cfg: DynamicsConfig, now: int) -> dict[str, float]:
    """Compute next confidences for every record; returns id -> new confidence."""
    recs = sorted(store, key=lambda r: r.id)
    if not recs:
        return {}
    kappa = np.array([r.confidence for r in recs])
    f = np.array([fitness(r, now, cfg) for r in recs])
    new = replicator_decay_step(kappa, f, cfg)
    return {r.id: float(k) for r, k in zip(recs, new)}


def apply_step(store: Store, cfg: DynamicsConfig, now: int) -> float:
    """Step the live store in place; returns max |change in confidence|."""

    def _write(s: Store) -> float:
        update = step(s, cfg, now)
        biggest = 0.0
        for rid, k in update.items():
            rec = s.get(rid)
            biggest = max(biggest, abs(k - rec.confidence))
            rec.confidence = k
        return biggest

    return store.write(_write)


def lyapunov(kappa: Sequence[float] | np.ndarray, f: Sequence[float] | np.ndarray) -> float:
    """V = -sum k_i ln(f_i / f_bar), skipping records with zero fitness."""
    kappa = np.asarray(kappa, dtype=float)
    f = np.asarray(f, dtype=float)
    fbar = mean_fitness(kappa, f)
    if fbar <= 0:
        return 0.0
    live = f > 0
    return float(-np.sum(kappa[live] * np.log(f[live] / fbar)))


def store_lyapunov(store: Store | StoreSnapshot, cfg: DynamicsConfig, now: int) -> float:
    recs = list(store)
    return lyapunov([r.confidence for r in recs], [fitness(r, now, cfg) for r in recs])


# --- array-level populations -----------------------------------------------

FitnessFn = Callable[[np.ndarray], np.ndarray]


def fixed_fitness(values: Sequence[float]) -> FitnessFn:
    arr = np.asarray(values, dtype=float)
    return lambda kappa: arr


def crowding_fitness(quality: Sequence[float], crowding: float) -> FitnessFn:
    """Density-dependent fitness: q_i - c * k_i, floored at zero.

    Heavy reliance on one memory erodes its marginal success rate, which is
    what lets residents equalise their fitness under clamping.
    """
    q = np.asarray(quality, dtype=float)
    return lambda kappa: np.clip(q - crowding * kappa, 0.0, None)


@dataclass
class Population:
    ids: list[str]
    kappa: np.ndarray
    fitness_fns: list[tuple[slice, FitnessFn]]
    cfg: DynamicsConfig
    recent_deltas: deque = field(default_factory=lambda: deque(maxlen=50))
    lyapunov_trace: list[float] = field(default_factory=list)
    steps: int = 0

    @classmethod
    def create(cls, ids: Sequence[str], kappa0: Sequence[float], fn: FitnessFn, cfg: DynamicsConfig) -> "Population":
        n = len(ids)
        return cls(
            list(ids),
            np.asarray(kappa0, dtype=float).copy(),
            [(slice(0, n), fn)],
            cfg,
            deque(maxlen=cfg.quiescence_steps),
        )

    def fitness(self) -> np.ndarray:
        out = np.empty_like(self.kappa)
        for sl, fn in self.fitness_fns:
            out[sl] = fn(self.kappa[sl])
        return out

    def inject(self, rid: str, kappa0: float, fn: FitnessFn) -> int:
        idx = len(self.ids)
        self.ids.append(rid)
        self.kappa = np.append(self.kappa, kappa0)
        self.fitness_fns.append((slice(idx, idx + 1), fn))
        return idx

    def step(self, n: int = 1, track_lyapunov: bool = False) -> None:
        for _ in range(n):
            f = self.fitness()
            if track_lyapunov:
                self.lyapunov_trace.append(lyapunov(self.kappa, f))
            new = replicator_decay_step(self.kappa, f, self.cfg)
            self.recent_deltas.append(float(np.max(np.abs(new - self.kappa))) if len(new) else 0.0)
            self.kappa = new
            self.steps += 1

    def quiescent(self) -> bool:
        return (
            len(self.recent_deltas) == self.recent_deltas.maxlen
            and max(self.recent_deltas) < self.cfg.esms_tolerance
        )

    def run_to_quiescence(self, max_steps: int = 100_000, track_lyapunov: bool = False) -> int:
        while not self.quiescent():
            if self.steps >= max_steps:
                raise NotQuiescent(f"no quiescence after {max_steps} steps")
            self.step(track_lyapunov=track_lyapunov)
        return self.steps


@dataclass
class InvasionResult:
    invader_id: str
    invader_fitness: float
    max_kappa: float
    threshold: float
    steps: int

    @property
    def repelled(self) -> bool:
        return self.max_kappa <= self.threshold


@dataclass
class ESMSReport:
    converged: bool
    residents: list[str]
    fitness_spread: float
    mean_fitness: float
    invasions: list[InvasionResult] = field(default_factory=list)


def esms_check(
    pop: Population,
    cfg: Optional[DynamicsConfig] = None,
    invaders: Sequence[float] = (),
    invasion_steps: int = 1000,
    invader_kappa0: float = 0.5,
    slack: Optional[float] = None,
) -> ESMSReport:
    """Residency and invasion report for a quiescent population.

    Residents are memories whose confidence has not sunk below the mutation
    floor mu / lambda (within ``esms_tolerance``; a population with equal
    fitness sits exactly on the floor). Each entry of
    ``invaders`` is a fixed fitness for a memory injected into a copy of the
    population; its confidence must stay below the floor plus ``slack``.
    """
    cfg = cfg or pop.cfg
    if not pop.quiescent():
        raise NotQuiescent("population has not settled; run_to_quiescence first")
    f = pop.fitness()
    floor = cfg.mu_mutation / cfg.lambda_decay
    res_mask = pop.kappa >= floor - cfg.esms_tolerance
    residents = [pop.ids[i] for i in np.flatnonzero(res_mask)]
    spread = float(f[res_mask].max() - f[res_mask].min()) if res_mask.any() else 0.0
    report = ESMSReport(True, residents, spread, mean_fitness(pop.kappa, f))
    tol = cfg.esms_tolerance if slack is None else slack
    for n, fit in enumerate(invaders):
        trial = Population(
            list(pop.ids), pop.kappa.copy(), list(pop.fitness_fns), cfg, deque(maxlen=cfg.quiescence_steps)
        )
        idx = trial.inject(f"invader{n}", invader_kappa0, fixed_fitness([fit]))
        peak = invader_kappa0
        for _ in range(invasion_steps):
            trial.step()
            peak = max(peak, float(trial.kappa[idx]))
        report.invasions.append(InvasionResult(f"invader{n}", fit, peak, floor + tol, invasion_steps))
    return report


# --- store size bound ------------------------------------------------------


@dataclass
class SizeBoundReport:
    bound: float
    mean_steady_size: float
    per_seed: list[float]
    slack: float

    @property
    def within_bound(self) -> bool:
        return self.mean_steady_size <= self.bound * (1 + self.slack)


def size_bound(rate: float, lambda_decay: float, epsilon: float, initial_size: int) -> float:
    """(r / lambda) * ln(1 / eps) + |M0|."""
    return rate / lambda_decay * math.log(1.0 / epsilon) + initial_size


def size_bound_experiment(
    rate: float = 5.0,
    lambda_decay: float = 0.01,
    epsilon: float = 0.01,
    mu: float = 1e-5,
    turns: int = 2000,
    seeds: Sequence[int] = range(10),
    initial_size: int = 50,
    kappa0: float = 0.5,
    steady_from: Optional[int] = None,
    slack: float = 0.10,
) -> SizeBoundReport:
    """Poisson(rate) additions per turn, decay-only dynamics, prune below epsilon.

    Unretrieved memories have zero fitness, so the selection term vanishes and
    each confidence follows the decay-mutation recurrence until pruned. Steady
    size is the mean over turns ``steady_from``..``turns``.
    """
    cfg = DynamicsConfig(lambda_decay=lambda_decay, mu_mutation=mu)
    start = turns // 2 if steady_from is None else steady_from
    per_seed = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        kappa = np.full(initial_size, kappa0)
        sizes = []
        for t in range(turns):
            kappa = np.append(kappa, np.full(rng.poisson(rate), kappa0))
            kappa = replicator_decay_step(kappa, np.zeros_like(kappa), cfg)
            kappa = kappa[kappa >= epsilon]
            if t >= start:
                sizes.append(len(kappa))
        per_seed.append(float(np.mean(sizes)))
    return SizeBoundReport(
        size_bound(rate, lambda_decay, epsilon, initial_size), float(np.mean(per_seed)), per_seed, slack
    )


# --- invasion experiment ----------------------------------------------------


@dataclass
class ESMSExperimentReport:
    spreads: list[float]
    invader_peaks: list[float]
    lyapunov_fractions: list[float]
    floor: float
    spread_limit: float
    invader_slack: float
    lyapunov_share: float

    @property
    def invasion_passed(self) -> bool:
        return all(s <= self.spread_limit for s in self.spreads) and all(
            p <= self.floor + self.invader_slack for p in self.invader_peaks
        )

    @property
    def lyapunov_passed(self) -> bool:
        return all(f >= self.lyapunov_share for f in self.lyapunov_fractions)


def esms_experiment(
    seeds: Sequence[int] = range(10),
    n: int = 30,
    cfg: Optional[DynamicsConfig] = None,
    converge_steps: int = 2000,
    invasion_steps: int = 1000,
    transient: int = 100,
    spread_limit: float = 0.02,
    invader_slack: float = 0.05,
    lyapunov_share: float = 0.95,
) -> ESMSExperimentReport:
    """Converge ``n`` memories under crowding fitness, then inject a zero-fitness invader.

    Qualities are drawn from U[0.3, 0.95], every memory starts at the store
    default confidence 0.5 and the crowding coefficient is 1.
    """
    cfg = cfg or DynamicsConfig()
    spreads, peaks, fracs = [], [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        q = rng.uniform(0.3, 0.95, n)
        pop = Population.create([f"m{i:02d}" for i in range(n)], np.full(n, 0.5), crowding_fitness(q, 1.0), cfg)
        pop.step(converge_steps, track_lyapunov=True)
        if not pop.quiescent():
            raise NotQuiescent(f"seed {seed}: no quiescence after {converge_steps} steps")
        rep = esms_check(pop, cfg, invaders=[0.0], invasion_steps=invasion_steps, slack=invader_slack)
        spreads.append(rep.fitness_spread)
        peaks.append(rep.invasions[0].max_kappa)
        v = np.asarray(pop.lyapunov_trace[transient:])
        fracs.append(float(np.mean(np.diff(v) <= 1e-12)) if len(v) > 1 else 1.0)
    return ESMSExperimentReport(spreads, peaks, fracs, cfg.floor, spread_limit, invader_slack, lyapunov_share)
