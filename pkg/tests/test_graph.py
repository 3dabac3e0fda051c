import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prism_memory.errors import InfeasibleDmin, SupportMismatch
from prism_memory.extractor import RuleExtractor
from prism_memory.graph import (
    CausalGraph,
    RetrievalDistribution,
    causal_extract,
    coverage_bound,
    coverage_experiment,
    diverse_distributions,
    exploration_divergence,
    graph_neighbors,
)

X = RuleExtractor()


def test_no_pattern_leaves_graph_unchanged():
    g = CausalGraph()
    assert causal_extract("m1", "nothing relevant", g, "0", X) == []
    assert g.dumps() == ""


def test_causal_edge_with_provenance_and_dedup():
    g = CausalGraph()
    (edge,) = causal_extract("m1", "do(price=low) => share_up", g, "agent7", X)
    assert edge.causal and edge.label == "do(price=low) ⇒ share_up"
    assert edge.provenance == "agent7"
    assert causal_extract("m2", "do(price=low) => share_up", g, "agent9", X) == []
    assert len(g.edges) == 1
    assert g.edges[edge.id].provenance == "agent7"
    assert g.links["price"] == {"m1", "m2"}


def test_merge_keeps_max_strength():
    g = CausalGraph()
    g.add_node("a")
    g.add_node("b")
    e, created = g.add_edge("a", "b", "r", "0", strength=0.3)
    e2, created2 = g.add_edge("a", "b", "r", "1", strength=0.8)
    assert created and not created2 and e2 is e
    assert e.strength == 0.8 and e.provenance == "0"


def chain():
    g = CausalGraph()
    for n in "abc":
        g.add_node(n)
        g.link(n, "m_" + n)
    g.add_edge("a", "b", "r", "0")
    g.add_edge("b", "c", "r", "0")
    return g


def test_neighbors_examples():
    g = chain()
    assert graph_neighbors([], g, 2) == set()
    assert graph_neighbors(["a"], g, 0) == {"m_a"}
    assert graph_neighbors(["a"], g, 1) == {"m_a", "m_b"}
    assert graph_neighbors(["a"], g, 2) == {"m_a", "m_b", "m_c"}


def bfs_oracle(adj, seeds, hops):
    dist = {s: 0 for s in seeds}
    layer = list(seeds)
    for d in range(hops):
        nxt = []
        for u in layer:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = d + 1
                    nxt.append(v)
        layer = nxt
    return set(dist)


@pytest.mark.parametrize("seed", range(5))
def test_neighbors_match_bfs_oracle(seed):
    rng = random.Random(seed)
    g = CausalGraph()
    names = [f"n{i}" for i in range(30)]
    adj = {n: set() for n in names}
    for n in names:
        g.add_node(n)
        for j in range(rng.randint(0, 2)):
            g.link(n, f"m{rng.randint(0, 60)}")
    for _ in range(40):
        a, b = rng.sample(names, 2)
        g.add_edge(a, b, rng.choice(["r", "s"]), "0", causal=rng.random() < 0.5)
        adj[a].add(b)
        adj[b].add(a)
    seeds = rng.sample(names, 2)
    expect = set()
    for n in bfs_oracle(adj, seeds, 2):
        expect |= g.links.get(n, set())
    assert graph_neighbors(seeds, g, 2) == expect
    for h in range(4):
        assert graph_neighbors(seeds, g, h) <= graph_neighbors(seeds, g, h + 1)


def test_graph_text_round_trip():
    g = CausalGraph()
    causal_extract("m1", "do(a=1) => b and b --feeds--> c", g, "2", X)
    back = CausalGraph.loads(g.dumps())
    assert back.dumps() == g.dumps()
    e, created = back.add_edge("a", "c", "x", "0")
    assert created and e.id not in g.edges


def dist(agent, probs):
    return RetrievalDistribution(agent, dict(zip(["x", "y"], probs)))


def test_kl_examples():
    a, b = dist("i", (0.5, 0.5)), dist("j", (0.9, 0.1))
    assert exploration_divergence(a, a) == 0.0
    assert exploration_divergence(a, b) == pytest.approx(0.5 * math.log2(0.5 / 0.9) + 0.5 * math.log2(5), abs=1e-12)
    assert exploration_divergence(a, b) == pytest.approx(0.7370, abs=1e-4)
    reverse = 0.9 * math.log2(0.9 / 0.5) + 0.1 * math.log2(0.1 / 0.5)
    assert exploration_divergence(b, a) == pytest.approx(reverse, abs=1e-12)
    assert exploration_divergence(b, a) == pytest.approx(0.5310, abs=1e-4)
    assert exploration_divergence(a, b) != pytest.approx(exploration_divergence(b, a))


def test_kl_support_mismatch():
    with pytest.raises(SupportMismatch):
        exploration_divergence(dist("i", (0.5, 0.5)), RetrievalDistribution("j", {"x": 1.0}))


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 20)), st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 20)))
def test_smoothed_kl_nonnegative_and_identity(ci, cj):
    support = "abcdef"
    ri = RetrievalDistribution.from_counts("i", ci, support)
    rj = RetrievalDistribution.from_counts("j", cj, support)
    assert sum(ri.probs.values()) == pytest.approx(1.0, abs=1e-9)
    assert min(ri.probs.values()) > 0
    assert exploration_divergence(ri, rj) >= 0
    assert exploration_divergence(ri, ri) == pytest.approx(0.0, abs=1e-12)


def test_diverse_distributions_reach_target():
    p = diverse_distributions(4, 200, 0.3)
    kls = [np.sum(p[i] * np.log2(p[i] / p[j])) for i in range(4) for j in range(4) if i != j]
    assert min(kls) >= 0.3 - 1e-9
    assert min(kls) < 0.31
    with pytest.raises(InfeasibleDmin):
        diverse_distributions(4, 200, 50.0)


def test_coverage_single_agent():
    rep = coverage_experiment(1, 5, [10, 50], 0.3, 200, seeds=20)
    assert all(rep.satisfied)
    assert rep.bound[0] == pytest.approx(coverage_bound(1, 5, 0.3, 10, 200))


def test_coverage_saturates_at_universe():
    rep = coverage_experiment(2, 3, [200], 0.3, 12, seeds=5)
    assert rep.empirical[0] == 12
