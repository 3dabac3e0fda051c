import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from prism_memory.dynamics import (
    DynamicsConfig,
    Population,
    crowding_fitness,
    esms_check,
    fitness,
    fixed_fitness,
    lyapunov,
    replicator_decay_step,
    size_bound,
    size_bound_experiment,
    step,
)
from prism_memory.embedding import Embedder, embed
from prism_memory.errors import NotQuiescent
from prism_memory.memory import MemoryRecord, Store, StoreConfig

CFG = DynamicsConfig(lambda_decay=0.01, mu_mutation=0.005)


def rec(rid, kappa=0.5):
    return MemoryRecord(rid, "alpha", embed("alpha", Embedder(16)), 1.0, confidence=kappa)


def test_fitness_window_examples():
    r = rec("m1")
    assert fitness(r, 100, CFG) == 0.0
    for t in (98, 99, 100):
        r.record_outcome(t, True)
    assert fitness(r, 100, CFG) == pytest.approx(3 / 3.1)
    old = rec("m2")
    old.record_outcome(100 - 50 - 1, True)
    assert fitness(old, 100, CFG) == 0.0


def test_single_memory_fixed_point():
    k = np.array([0.9])
    for _ in range(10_000):
        k = replicator_decay_step(k, np.array([0.7]), CFG)
    assert k[0] == pytest.approx(0.5, abs=1e-6)


def test_fixed_point_saturates_when_mutation_dominates():
    cfg = DynamicsConfig(lambda_decay=0.01, mu_mutation=0.02)
    k = np.array([0.1])
    for _ in range(2000):
        k = replicator_decay_step(k, np.zeros(1), cfg)
    assert k[0] == 1.0


def test_selection_direction_two_memories():
    s = Store(StoreConfig())
    a, b = rec("m1"), rec("m2")
    for t in range(10):
        a.record_outcome(t, t < 8)
        b.record_outcome(t, t < 2)
    s.insert(a)
    s.insert(b)
    new = step(s, CFG, now=10)
    assert new["m1"] > new["m2"]


def reference_trajectory(kappa, f, cfg, dt, turns):
    """Plain-python Euler integration, independent of the package."""
    k = list(kappa)
    for _ in range(int(round(turns / dt))):
        s = sum(k)
        fbar = sum(ki * fi for ki, fi in zip(k, f)) / s if s else 0.0
        k = [
            min(1.0, max(0.0, ki + dt * (ki * (fi - fbar) - cfg.lambda_decay * ki + cfg.mu_mutation)))
            for ki, fi in zip(k, f)
        ]
    return k


def test_coarse_step_tracks_fine_reference():
    rng = np.random.default_rng(3)
    kappa = rng.uniform(0.05, 0.3, 20)
    f = rng.uniform(0.0, 0.3, 20)
    coarse = DynamicsConfig(lambda_decay=0.01, mu_mutation=0.005, dt=0.1)
    k = kappa.copy()
    for _ in range(1000):
        k = replicator_decay_step(k, f, coarse)
    ref = reference_trajectory(kappa, f, coarse, 0.01, 100)
    assert np.max(np.abs(k - np.array(ref))) < 1e-3


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=12),
    st.data(),
    st.floats(0.01, 2.0),
)
def test_confidence_stays_in_unit_interval(kappa, data, dt):
    f = data.draw(st.lists(st.floats(0, 1), min_size=len(kappa), max_size=len(kappa)))
    cfg = DynamicsConfig(dt=dt)
    new = replicator_decay_step(np.array(kappa), np.array(f), cfg)
    assert np.all(new >= 0) and np.all(new <= 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 1), st.floats(0, 1), st.floats(0, 1))
def test_monotone_selection(k, f_lo, f_hi):
    assume(f_hi - f_lo > 1e-9)
    kappa = np.array([k, k, 0.5])
    f = np.array([f_hi, f_lo, 0.5])
    fbar = float(np.dot(kappa, f) / kappa.sum())
    inc = kappa * (f - fbar) - CFG.lambda_decay * kappa + CFG.mu_mutation
    assert inc[0] > inc[1]


def test_lyapunov_examples():
    assert lyapunov([0.3, 0.7], [0.4, 0.4]) == pytest.approx(0.0)
    assert lyapunov([1, 1], [0.8, 0.2]) == pytest.approx(-(math.log(1.6) + math.log(0.4)), abs=1e-12)
    assert lyapunov([1, 1], [0.8, 0.2]) == pytest.approx(0.4463, abs=1e-4)
    # zero-fitness records are skipped
    assert lyapunov([1, 1, 1], [0.8, 0.2, 0.0]) == pytest.approx(
        -(math.log(0.8 / 1 * 3 / 1.0) + math.log(0.2 * 3 / 1.0))
    )


def converged(seed, n=30):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.3, 0.95, n)
    pop = Population.create([f"m{i:02d}" for i in range(n)], np.full(n, 0.5), crowding_fitness(q, 1.0), CFG)
    pop.step(2000, track_lyapunov=True)
    assert pop.quiescent()
    return pop


def test_esms_requires_quiescence():
    pop = Population.create(["a"], [0.2], fixed_fitness([0.5]), CFG)
    with pytest.raises(NotQuiescent):
        esms_check(pop)


def test_homogeneous_population_all_resident():
    pop = Population.create([f"m{i}" for i in range(5)], np.linspace(0.2, 0.8, 5), fixed_fitness([0.4] * 5), CFG)
    pop.step(3000)
    rep = esms_check(pop)
    assert rep.fitness_spread == 0.0
    assert len(rep.residents) == 5


def test_invader_repelled_and_residents_equalised():
    pop = converged(0)
    rep = esms_check(pop, invaders=[0.0], invasion_steps=1000)
    assert rep.invasions[0].repelled
    assert rep.fitness_spread <= 2 * CFG.esms_tolerance
    assert len(rep.residents) > 0


def test_lyapunov_non_increasing_after_transient():
    pop = converged(1)
    v = np.array(pop.lyapunov_trace[100:])
    assert np.mean(np.diff(v) <= 1e-12) >= 0.95


def test_size_bound_formula():
    assert size_bound(5, 0.01, 0.01, 50) == pytest.approx(500 * math.log(100) + 50)


def test_size_bound_small_run():
    rep = size_bound_experiment(turns=600, seeds=range(2))
    assert rep.within_bound
    assert rep.mean_steady_size > 0
