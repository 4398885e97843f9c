import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chagnn.attacks import AttackBudget, heuristic_inject
from chagnn.defense import (DefenseConfig, baseline_adaedge, baseline_jaccard, chagnn_run,
                            elimination_count, eliminate_edges, identify_heterophilous,
                            jaccard_similarity, js_divergence, js_rows, modified_node_set,
                            sampling_probs)
from chagnn.errors import InputError
from chagnn.graph import build_graph
from chagnn.models import TrainConfig


def brute_force_flags(graph, v_m, v_l, labels, pseudo):
    flagged = set()
    for u in v_m:
        for v in graph.neighbors(u):
            ref = labels[v] if v in v_l else pseudo[v]
            if ref != pseudo[u]:
                flagged.add((min(u, v), max(u, v)))
    return sorted(flagged)


def test_identify_heterophilous_examples():
    g = build_graph([(0, 1), (1, 2), (2, 3)], 4)
    labels = np.array([0, 1, 1, 0])
    pseudo = np.array([0, 0, 1, 1])
    # 2 in V_M: neighbor 1 labeled (1 == pseudo 1, kept), neighbor 3 unlabeled (pseudo 1 == 1, kept)
    assert identify_heterophilous(g, [2], [0, 1], labels, pseudo).tolist() == []
    # 1 in V_M: pseudo 0; neighbor 0 labeled 0 (kept), neighbor 2 pseudo 1 (flag)
    assert identify_heterophilous(g, [1], [0], labels, pseudo).tolist() == [[1, 2]]


@pytest.mark.parametrize("seed", range(100))
def test_identify_heterophilous_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    pairs = rng.integers(0, n, size=(int(rng.integers(0, 3 * n)), 2))
    g = build_graph(pairs, n)
    labels = rng.integers(0, 3, n)
    pseudo = rng.integers(0, 3, n)
    v_m = np.flatnonzero(rng.random(n) < 0.4)
    v_l = set(np.flatnonzero(rng.random(n) < 0.3).tolist())
    got = identify_heterophilous(g, v_m, sorted(v_l), labels, pseudo)
    assert [tuple(r) for r in got.tolist()] == brute_force_flags(g, v_m, v_l, labels, pseudo)


def direct_js(p, q):
    m = [(a + b) / 2 for a, b in zip(p, q)]
    kl = lambda x, y: sum(a * math.log2(a / b) for a, b in zip(x, y) if a > 0)
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def test_js_examples():
    assert js_divergence([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert js_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert js_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(direct_js([0.5, 0.5], [0.9, 0.1]), abs=1e-15)


def test_js_rejects_non_distributions():
    with pytest.raises(InputError):
        js_divergence([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(InputError):
        js_divergence([0.5, 0.5], [1.0, 0.0, 0.0])


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_js_rows_match_scalar(seed, c):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(c), size=4), rng.dirichlet(np.ones(c), size=4)
    rows = js_rows(p, q)
    for i in range(4):
        assert rows[i] == pytest.approx(direct_js(p[i], q[i]), abs=1e-12)


def test_sampling_probs_examples():
    assert np.allclose(sampling_probs([1.0, 1.0]), [0.5, 0.5])
    p = sampling_probs([0.0, math.log(3)])
    assert np.allclose(p, [0.25, 0.75])
    with pytest.raises(InputError):
        sampling_probs([])


@pytest.mark.parametrize("q,size,expected", [(0.1, 100, 10), (0.1, 9, 0), (0.29, 100, 29), (1.0, 7, 7), (0.0, 50, 0)])
def test_elimination_count(q, size, expected):
    assert elimination_count(q, size) == expected


def test_eliminate_edges_removes_exact_count_without_replacement():
    g = build_graph([(i, i + 1) for i in range(20)], 21)
    edges = g.edge_array()
    probs = sampling_probs(np.linspace(0, 1, len(edges)))
    h, removed = eliminate_edges(g, edges, probs, 0.5, seed=3)
    assert len(removed) == 10 and len({tuple(r) for r in removed.tolist()}) == 10
    assert h.num_edges == 10
    h2, removed2 = eliminate_edges(g, edges, probs, 0.5, seed=3)
    assert np.array_equal(removed, removed2)


def test_eliminate_edges_prefers_high_scores():
    g = build_graph([(i, i + 1) for i in range(10)], 11)
    edges = g.edge_array()
    probs = sampling_probs([0] * 9 + [20])
    counts = sum(tuple(eliminate_edges(g, edges, probs, 0.1, seed=s)[1][0]) == (9, 10) for s in range(50))
    assert counts >= 49


def test_modified_node_set(small_synth):
    p = heuristic_inject(small_synth, AttackBudget(num_inject=4, inject_degree=2), 0)
    v_m = modified_node_set(p)
    assert set(p.injected_ids.tolist()) <= set(v_m.tolist())
    assert set(np.flatnonzero(small_synth.test_mask).tolist()) <= set(v_m.tolist())
    assert np.array_equal(modified_node_set(small_synth), np.flatnonzero(small_synth.test_mask))


def test_chagnn_history_and_monotone_removal(small_synth):
    p = heuristic_inject(small_synth, AttackBudget(num_inject=12, inject_degree=4), 0)
    tcfg = TrainConfig(max_epochs=60, fine_tune_epochs=10)
    _, cleaned, hist = chagnn_run(p, DefenseConfig(0.2, 3), tcfg, seed=0)
    assert [h["iter"] for h in hist] == [0, 1, 2, 3]
    total = sum(h["removed"] for h in hist)
    assert cleaned.graph.num_edges == p.merged.graph.num_edges - total
    for h in hist[1:]:
        assert h["removed"] == elimination_count(0.2, h["he_size"])
    # only edges, never nodes or features, change
    assert cleaned.num_nodes == p.merged.num_nodes
    assert np.array_equal(cleaned.features, p.merged.features)


def test_zero_rate_removes_nothing(small_synth):
    tcfg = TrainConfig(max_epochs=30, fine_tune_epochs=5)
    _, cleaned, hist = chagnn_run(small_synth, DefenseConfig(0.0, 2), tcfg, seed=0)
    assert cleaned.graph == small_synth.graph and all(h["removed"] == 0 for h in hist)


def test_defense_config_validation():
    with pytest.raises(InputError):
        DefenseConfig(elimination_rate=1.5)
    with pytest.raises(InputError):
        DefenseConfig(max_iter=0)


def test_adaedge_removes_all_flags(small_synth):
    pseudo = small_synth.labels.copy()
    pseudo[small_synth.test_mask] = (pseudo[small_synth.test_mask] + 1) % 3
    out = baseline_adaedge(small_synth, pseudo)
    v_m = modified_node_set(small_synth)
    flags = identify_heterophilous(small_synth.graph, v_m, small_synth.labeled_nodes(), small_synth.labels, pseudo)
    assert out.graph.num_edges == small_synth.graph.num_edges - len(flags)
    again = identify_heterophilous(out.graph, v_m, small_synth.labeled_nodes(), small_synth.labels, pseudo)
    assert len(again) == 0


def test_jaccard():
    a = np.array([[1, 0, 1], [0, 0, 0], [1, 1, 0]])
    b = np.array([[1, 1, 0], [0, 0, 0], [0, 0, 1]])
    assert np.allclose(jaccard_similarity(a, b), [1 / 3, 1.0, 0.0])


def test_baseline_jaccard_drops_dissimilar(tiny):
    x = np.zeros((4, 2))
    x[:2, 0] = 1
    x[2:, 1] = 1
    from chagnn.data import Dataset
    ds = Dataset(build_graph([(0, 1), (1, 2), (2, 3)], 4), x, [0, 0, 1, 1], 2,
                 [True] * 2 + [False] * 2, [False] * 4, [False, False, True, True])
    assert baseline_jaccard(ds, 0.5).graph.edge_array().tolist() == [[0, 1], [2, 3]]
