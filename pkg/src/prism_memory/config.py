"""Flat, human-editable run configuration (YAML key/value document).

Every tunable of the substrate and harness appears exactly once. Values
with a published default keep it: tau1=2.5, tau2=5.0, lambda=0.01,
mu=0.005. Entropy thresholds are in bits, matching the entropy model.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .consolidation import ConsolidationConfig
from .dynamics import DynamicsConfig
from .errors import ConfigInvalid
from .heartbeat import HeartbeatConfig
from .memory import StoreConfig
from .retrieval import RetrievalConfig


@dataclass(frozen=True)
class PrismConfig:
    # stratification (bits, retrievals per window)
    tau1: float = 2.5
    tau2: float = 5.0
    phi1: int = 3
    phi3: int = 1
    epsilon_prune: float = 0.01
    context_budget: int = 4096
    compression_beta: float = 1.0
    kappa0: float = 0.5
    protect_skills: bool = False
    neighbor_count: int = 5
    # entropy model / embedding
    smoothing_alpha: float = 1.0
    embedding_dim: int = 256
    embedding_seed: int = 0
    # replicator-decay dynamics
    lambda_decay: float = 0.01
    mu_mutation: float = 0.005
    dt: float = 1.0
    fitness_window_w: int = 50
    fitness_epsilon: float = 0.1
    esms_tolerance: float = 0.01
    # retrieval
    eta: float = 0.05
    strategy_k: tuple = (4, 16)
    strategy_alpha: tuple = (0.5, 2.0)
    strategy_gamma: tuple = (0.0, 0.5)
    theta_min: float = 0.2
    success_threshold: float = 0.5
    use_graph: bool = True
    evolutionary_voi: bool = True
    # consolidation
    delta_mi: float = 0.8
    theta_cluster: float = 0.75
    theta_conflict: float = 0.9
    c_min: int = 3
    # heartbeat
    h_r: int = 25
    nu: int = 60
    delta_plateau: float = 0.01
    lookback_n: int = 10
    t_min: int = 20
    # harness
    task: str = "tsp"
    n_cities: int = 50
    n_circles: int = 10
    agents: int = 4
    turns: int = 500
    seeds: tuple = (0,)
    gamma_scale: float = 1.0

    def __post_init__(self) -> None:
        for name in ("strategy_k", "strategy_alpha", "strategy_gamma", "seeds"):
            val = getattr(self, name)
            if not isinstance(val, tuple):
                object.__setattr__(self, name, tuple(val) if isinstance(val, (list, tuple)) else (val,))
        if self.task not in ("tsp", "packing"):
            raise ConfigInvalid(f"unknown task {self.task!r}")
        if self.agents < 1 or self.turns < 0:
            raise ConfigInvalid("agents must be >= 1 and turns >= 0")
        try:
            self.store()
            self.dynamics()
            self.heartbeat()
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def store(self) -> StoreConfig:
        return StoreConfig(
            tau1=self.tau1,
            tau2=self.tau2,
            phi1=self.phi1,
            phi3=self.phi3,
            epsilon_prune=self.epsilon_prune,
            context_budget=self.context_budget,
            embedding_dim=self.embedding_dim,
            kappa0=self.kappa0,
            protect_skills=self.protect_skills,
            neighbor_count=self.neighbor_count,
            compression_beta=self.compression_beta,
            fitness_window=self.fitness_window_w,
        )

    def dynamics(self) -> DynamicsConfig:
        return DynamicsConfig(
            lambda_decay=self.lambda_decay,
            mu_mutation=self.mu_mutation,
            dt=self.dt,
            fitness_window_w=self.fitness_window_w,
            fitness_epsilon=self.fitness_epsilon,
            esms_tolerance=self.esms_tolerance,
        )

    def retrieval(self) -> RetrievalConfig:
        return RetrievalConfig(
            theta_min=self.theta_min, success_threshold=self.success_threshold, use_graph=self.use_graph
        )

    def consolidation(self) -> ConsolidationConfig:
        return ConsolidationConfig(
            delta_mi=self.delta_mi,
            theta_cluster=self.theta_cluster,
            theta_conflict=self.theta_conflict,
            c_min=self.c_min,
        )

    def heartbeat(self) -> HeartbeatConfig:
        return HeartbeatConfig(
            h_r=self.h_r, nu=self.nu, delta_plateau=self.delta_plateau, lookback_n=self.lookback_n, t_min=self.t_min
        )

    def replace(self, **changes: Any) -> "PrismConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def from_mapping(data: Optional[Mapping[str, Any]]) -> PrismConfig:
    data = dict(data or {})
    known = {f.name for f in fields(PrismConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
    try:
        return PrismConfig(**data)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from exc


def load_config(path: Path | str) -> PrismConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: top level must be a mapping")
    return from_mapping(data)
