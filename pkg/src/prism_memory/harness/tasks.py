"""Optimisation tasks driven by the scripted agents.

Each task exposes four move-parameter tokens. Agents pick one per turn from
what they retrieve, so the tokens double as the vocabulary of the seeded
skills and of the improvement notes agents write.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from ..errors import ConfigInvalid


@dataclass(frozen=True)
class TspInstance:
    cities: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        pts = np.asarray(self.cities, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise ConfigInvalid("a TSP instance needs at least 4 two-dimensional cities")
        if len({tuple(p) for p in pts}) != len(pts):
            raise ConfigInvalid("city coordinates must be distinct")
        object.__setattr__(self, "cities", pts)

    @classmethod
    def random(cls, n: int, seed: int, scale: float = 1000.0) -> "TspInstance":
        rng = np.random.default_rng([seed, 0x75])
        return cls(rng.uniform(0.0, scale, size=(n, 2)), seed)

    @property
    def n(self) -> int:
        return len(self.cities)

    def distances(self) -> np.ndarray:
        diff = self.cities[:, None, :] - self.cities[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class PackingInstance:
    """Equal circles in the unit square; the score is covered area fraction."""

    n_circles: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_circles < 2:
            raise ConfigInvalid("packing needs at least 2 circles")


class Task(Protocol):
    name: str
    minimize: bool
    params: dict[str, float]

    def initial(self) -> tuple[Any, float]: ...

    def propose(self, solution: Any, param: str, rng: np.random.Generator) -> tuple[Any, float]: ...


def better(a: float, b: float, minimize: bool) -> bool:
    """Strict improvement with a small guard against float noise."""
    return a < b - 1e-9 if minimize else a > b + 1e-9


def tour_length(tour: np.ndarray, dist: np.ndarray) -> float:
    return float(dist[tour, np.roll(tour, -1)].sum())


def reverse_segment(tour: np.ndarray, i: int, length: int) -> np.ndarray:
    """Reverse ``length`` consecutive positions starting at ``i`` (cyclically)."""
    n = len(tour)
    out = tour.copy()
    if i + length <= n:
        out[i : i + length] = out[i : i + length][::-1]
    else:
        # reversing the complementary arc yields the same cycle
        j = (i + length - 1) % n
        out[j + 1 : i] = out[j + 1 : i][::-1]
    return out


@dataclass
class TspTask:
    instance: TspInstance
    name: str = "tsp"
    minimize: bool = True
    params: dict[str, float] = field(default_factory=lambda: {"seg3": 3, "seg6": 6, "seg12": 12, "seg24": 24})
    objective_token: str = "tour"

    def __post_init__(self) -> None:
        self.dist = self.instance.distances()

    def initial(self) -> tuple[np.ndarray, float]:
        tour = np.random.default_rng([self.instance.seed, 0x70]).permutation(self.instance.n)
        return tour, tour_length(tour, self.dist)

    def segment_bounds(self, param: str) -> tuple[int, int]:
        v = int(self.params[param])
        n = self.instance.n
        lo = max(2, v // 2)
        hi = max(lo, min(n - 2, v + v // 2))
        return lo, hi

    def propose(self, tour: np.ndarray, param: str, rng: np.random.Generator, score: float | None = None
                ) -> tuple[np.ndarray, float]:
        """One 2-opt segment reversal; the length is drawn around the parameter value."""
        n = len(tour)
        lo, hi = self.segment_bounds(param)
        length = int(rng.integers(lo, hi + 1))
        i = int(rng.integers(n))
        j = (i + length - 1) % n
        a, b, c, d = tour[i - 1], tour[i], tour[j], tour[(j + 1) % n]
        delta = self.dist[a, c] + self.dist[b, d] - self.dist[a, b] - self.dist[c, d]
        base = tour_length(tour, self.dist) if score is None else score
        return reverse_segment(tour, i, length), base + float(delta)


def packing_radius(centers: np.ndarray) -> float:
    """Largest common radius for circles at ``centers`` inside the unit square."""
    wall = float(np.min(np.minimum(centers, 1.0 - centers)))
    diff = centers[:, None, :] - centers[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    d[np.diag_indices(len(centers))] = np.inf
    return max(0.0, min(wall, float(d.min()) / 2.0))


def packing_density(centers: np.ndarray) -> float:
    r = packing_radius(centers)
    return len(centers) * math.pi * r * r


@dataclass
class PackingTask:
    instance: PackingInstance
    name: str = "packing"
    minimize: bool = False
    params: dict[str, float] = field(
        default_factory=lambda: {"jitter1": 0.01, "jitter3": 0.03, "jitter9": 0.09, "jitter27": 0.27}
    )
    objective_token: str = "packing"

    def initial(self) -> tuple[np.ndarray, float]:
        rng = np.random.default_rng([self.instance.seed, 0x70])
        centers = rng.uniform(0.0, 1.0, size=(self.instance.n_circles, 2))
        return centers, packing_density(centers)

    def propose(self, centers: np.ndarray, param: str, rng: np.random.Generator, score: float | None = None
                ) -> tuple[np.ndarray, float]:
        """Gaussian nudge of one circle with the parameter as standard deviation."""
        out = centers.copy()
        i = int(rng.integers(len(out)))
        out[i] = np.clip(out[i] + rng.normal(0.0, self.params[param], size=2), 0.0, 1.0)
        return out, packing_density(out)


def make_task(name: str, n_cities: int, n_circles: int, seed: int) -> TspTask | PackingTask:
    if name == "tsp":
        return TspTask(TspInstance.random(n_cities, seed))
    if name == "packing":
        return PackingTask(PackingInstance(n_circles, seed))
    raise ConfigInvalid(f"unknown task {name!r}")
