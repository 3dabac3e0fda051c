from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism_memory import PrismConfig
from prism_memory.errors import ConfigInvalid
from prism_memory.harness import (
    Episode,
    PackingInstance,
    TspInstance,
    TspTask,
    improvement_rate,
    knowledge_reuse,
    mann_kendall,
    pearson,
    run_episode,
)
from prism_memory.harness.corpus import task_model
from prism_memory.harness.metrics import TraceEvent, divergence_matrix, retrieval_distributions, reuse_ratio
from prism_memory.harness.sweep import RunManifest, precision_at_k, sweep, sweep_csv
from prism_memory.harness.tasks import reverse_segment, tour_length
from prism_memory.memory import Tier

SMALL = PrismConfig(n_cities=20, turns=60, agents=2)


def two_opt_local_optimum(task: TspTask) -> float:
    """Plain first-improvement 2-opt from the task's initial tour until no move helps."""
    tour, _ = task.initial()
    tour = list(tour)
    d = task.dist
    n = len(tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b, c, e = tour[i - 1], tour[i], tour[j], tour[(j + 1) % n]
                if d[a, c] + d[b, e] - d[a, b] - d[c, e] < -1e-10:
                    tour[i : j + 1] = tour[i : j + 1][::-1]
                    improved = True
    return tour_length(np.array(tour), d)


# --- tasks ----------------------------------------------------------------


def test_tsp_instance_rejects_too_few_or_duplicate_cities():
    with pytest.raises(ConfigInvalid):
        TspInstance(np.zeros((3, 2)))
    with pytest.raises(ConfigInvalid):
        TspInstance(np.array([[0, 0], [1, 0], [1, 1], [0, 0]]))


def test_packing_instance_needs_two_circles():
    with pytest.raises(ConfigInvalid):
        PackingInstance(1)


@given(st.integers(4, 30), st.integers(0, 29), st.integers(2, 29), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_segment_reversal_keeps_a_permutation_and_matches_delta(n, i, length, seed):
    i %= n
    length = min(length, n - 2) if n > 4 else 2
    task = TspTask(TspInstance.random(n, seed))
    tour, score = task.initial()
    out = reverse_segment(tour, i, length)
    assert sorted(out) == list(range(n))
    rng = np.random.default_rng(seed)
    cand, cand_score = task.propose(tour, "seg3", rng, score)
    assert cand_score == pytest.approx(tour_length(cand, task.dist), rel=1e-9)


# --- metrics --------------------------------------------------------------


def test_improvement_rate_hand_count():
    series = [10, 9, 9, 8, 8, 8, 5, 5, 4, 4]
    # strict drops at steps 1, 3, 6, 8 out of 9 steps
    assert improvement_rate(series) == pytest.approx(4 / 9)
    assert improvement_rate([1, 2, 2, 3], minimize=False) == pytest.approx(2 / 3)


def test_improvement_rate_edges():
    assert improvement_rate([5.0] * 8) == 0.0
    assert improvement_rate([5, 4, 3, 2, 1]) == 1.0
    assert improvement_rate([3.0]) == 0.0
    with pytest.raises(ValueError):
        improvement_rate([])


def test_reuse_ratio_own_and_foreign():
    assert reuse_ratio("a", ["a", "b"], ["a", "b"]) == 0.5
    assert reuse_ratio("a", [], ["a", "b"]) == 0.0
    # seeded records are neither own nor foreign
    assert reuse_ratio("a", ["seed", "b"], ["a", "b"]) == 1.0


def test_knowledge_reuse_orders_by_turn():
    ev = [TraceEvent(2, "a", ("x",), ("b",)), TraceEvent(1, "a", ("y",), ("a",)), TraceEvent(1, "b", ("y",), ("a",))]
    assert knowledge_reuse(ev, "a") == [0.0, 1.0]


def test_identical_retrieval_has_zero_divergence():
    ev = [TraceEvent(1, "a", ("x", "y"), ()), TraceEvent(1, "b", ("x", "y"), ())]
    m = divergence_matrix(retrieval_distributions(ev, ["a", "b"]))
    assert m[0][1] == pytest.approx(0.0, abs=1e-9)


def test_mann_kendall_and_pearson():
    assert mann_kendall([1, 2, 3, 4]) == 6
    assert mann_kendall([4, 3, 2, 1]) == -6
    assert mann_kendall([1, 1, 1]) == 0
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pearson([1], [1])


# --- corpus ---------------------------------------------------------------


def test_synthetic_corpus_places_each_kind_of_record_in_its_tier():
    model = task_model(["seg3", "seg6", "seg12", "seg24"], "tour")
    from prism_memory.entropy import entropy

    assert entropy("seg12", model) < 2.5
    assert 2.5 <= entropy("seg12 improved", model) < 5.0
    assert entropy("attempt seg12 failed score=4321.0.", model) >= 5.0


# --- episodes -------------------------------------------------------------


def test_zero_turns_gives_empty_series():
    m = run_episode(SMALL, seed=0, agents=1, turns=0)
    ep = Episode(SMALL, seed=0, agents=1, turns=0)
    assert m.best == [ep.initial_score]
    assert m.ir == [] and m.kr == [] and m.store_size == []
    assert m.evals == 0


def test_episode_rejects_zero_agents():
    with pytest.raises(ConfigInvalid):
        Episode(SMALL, seed=0, agents=0)


def test_episode_is_deterministic():
    a = run_episode(SMALL, seed=3)
    b = run_episode(SMALL, seed=3)
    assert a.to_csv() == b.to_csv()
    assert a.to_jsonl() == b.to_jsonl()
    assert a.digest() == b.digest()
    assert run_episode(SMALL, seed=4).digest() != a.digest()


def test_episode_invariants():
    ep = Episode(SMALL, seed=1)
    m = ep.run()
    assert m.evals == 2 * 60
    assert all(y <= x for x, y in zip(m.best, m.best[1:]))
    assert len(m.best) == 61 and len(m.ir) == len(m.kr) == 60
    authors = {a.id for a in ep.agents}
    for r in ep.sub.store:
        assert r.provenance in authors or r.provenance == "seed"
    for e in ep.sub.graph.edges.values():
        assert e.provenance in authors or e.provenance == "seed"
    assert m.best_score == pytest.approx(min(a.score for a in ep.agents))


def test_single_agent_knowledge_reuse_is_zero():
    m = run_episode(SMALL, seed=0, agents=1)
    assert m.kr == [0.0] * 60


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_agent_reaches_two_opt_quality(seed):
    cfg = PrismConfig(n_cities=20)
    m = run_episode(cfg, seed=seed, agents=1, turns=500)
    oracle = two_opt_local_optimum(TspTask(TspInstance.random(20, seed)))
    assert abs(m.best_score / oracle - 1.0) <= 0.15


def test_four_agent_reuse_trends_upward():
    m = run_episode(PrismConfig(), seed=0, agents=4, turns=500)
    assert mann_kendall(m.kr) > 0
    assert m.final_kr > 0.5


def test_packing_episode_improves_density():
    cfg = PrismConfig(task="packing", turns=80, agents=2)
    m = run_episode(cfg, seed=0)
    assert not m.minimize
    assert all(y >= x for x, y in zip(m.best, m.best[1:]))
    assert m.best_score > m.best[0]
    assert 0 < m.best_score <= 1


def test_all_tiers_occupied_after_default_episode():
    m = run_episode(PrismConfig(), seed=0, agents=4, turns=150)
    assert all(m.tier_counts[t.name.lower()] > 0 for t in Tier)


def test_metrics_serialisation_shapes():
    m = run_episode(SMALL, seed=0, turns=5)
    lines = m.to_csv().splitlines()
    assert lines[0] == "turn,best,ir,kr,store_size,mean_kappa"
    assert len(lines) == 1 + 1 + 5
    assert m.to_jsonl().splitlines()[0].startswith('{"IR"')


# --- sweeps and manifests -------------------------------------------------


def test_one_cell_grid_gives_one_row():
    rows = sweep([{"lambda_decay": 0.01}], SMALL.replace(turns=10), seeds=[0])
    assert len(rows) == 1
    assert rows[0].params == {"lambda_decay": 0.01}
    assert sweep_csv(rows).splitlines()[0] == "lambda_decay,IR,store_size,j_proxy,skills"


def test_sweep_rows_sorted_by_swept_parameter():
    grid = [{"lambda_decay": 0.05}, {"lambda_decay": 0.005}]
    rows = sweep(grid, SMALL.replace(turns=5), seeds=[0])
    assert [r.params["lambda_decay"] for r in rows] == [0.005, 0.05]


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        sweep([], SMALL, seeds=[0])


def test_precision_at_k_in_unit_interval():
    ep = Episode(SMALL, seed=0)
    ep.run()
    assert 0.0 <= precision_at_k(ep) <= 1.0


def test_manifest_round_trip():
    m = RunManifest("run", {"turns": 3}, None, [0, 1], "out", {"a.csv": "ff"})
    assert RunManifest.loads(m.dumps()) == m
