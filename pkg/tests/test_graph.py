import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chagnn.errors import InputError, UndefinedRatioError
from chagnn.graph import (build_graph, homophily_ratio, largest_component_nodes,
                          normalize_adjacency, spmm)


@st.composite
def graphs(draw, max_nodes=15):
    n = draw(st.integers(1, max_nodes))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40))
    return n, pairs


def dense_adjacency(n, pairs):
    a = np.zeros((n, n))
    for u, v in pairs:
        if u != v:
            a[u, v] = a[v, u] = 1
    return a


@given(graphs())
def test_build_graph_matches_dense(g):
    n, pairs = g
    graph = build_graph(pairs, n)
    assert np.array_equal(graph.to_csr().toarray(), dense_adjacency(n, pairs))
    assert graph.is_symmetric()
    assert graph.num_edges == int(dense_adjacency(n, pairs).sum() // 2)


@given(graphs(), st.sampled_from(["sym", "row"]), st.integers(1, 4))
def test_spmm_matches_dense_oracle(g, mode, width):
    n, pairs = g
    a = dense_adjacency(n, pairs) + np.eye(n)
    deg = a.sum(1)
    if mode == "sym":
        oracle = a / np.sqrt(np.outer(deg, deg))
    else:
        oracle = a / deg[:, None]
    adj = normalize_adjacency(build_graph(pairs, n), mode)
    assert np.allclose(adj.to_dense(), oracle, atol=1e-14)
    m = np.random.default_rng(n).normal(size=(n, width))
    assert np.allclose(spmm(adj, m), oracle @ m, atol=1e-12)


def test_row_normalized_rows_sum_to_one():
    adj = normalize_adjacency(build_graph([(0, 1), (1, 2)], 4), "row")
    assert np.allclose(adj.to_dense().sum(1), 1.0)


def test_spmm_dimension_mismatch():
    adj = normalize_adjacency(build_graph([(0, 1)], 3))
    with pytest.raises(InputError, match="dimension mismatch"):
        spmm(adj, np.ones((4, 2)))


def test_out_of_range_edge_rejected():
    with pytest.raises(InputError, match="out of range"):
        build_graph([(0, 5)], 3)


def test_unknown_mode():
    with pytest.raises(InputError):
        normalize_adjacency(build_graph([], 2), "laplacian")


def test_edge_add_remove_round_trip():
    g = build_graph([(0, 1), (1, 2), (2, 3)], 4)
    h = g.with_edges_removed([(2, 1)])
    assert not h.has_edge(1, 2) and h.has_edge(0, 1)
    assert h.with_edges_added([(1, 2)]) == g
    grown = g.with_edges_added([(3, 5)], num_nodes=6)
    assert grown.num_nodes == 6 and grown.has_edge(5, 3)


def test_homophily_ratio_counts_known_labels_only():
    g = build_graph([(0, 1), (1, 2), (2, 3)], 4)
    assert homophily_ratio(g, [0, 0, 1, -1]) == 0.5
    with pytest.raises(UndefinedRatioError):
        homophily_ratio(build_graph([], 3), [0, 1, 2])


def test_largest_component_tie_goes_to_smallest_id():
    g = build_graph([(3, 4), (0, 1)], 6)
    assert largest_component_nodes(g).tolist() == [0, 1]
    g = build_graph([(3, 4), (4, 5), (0, 1)], 6)
    assert largest_component_nodes(g).tolist() == [3, 4, 5]


@settings(max_examples=30)
@given(graphs())
def test_subgraph_keeps_internal_edges(g):
    n, pairs = g
    graph = build_graph(pairs, n)
    nodes = np.arange(0, n, 2)
    sub = graph.subgraph(nodes)
    dense = dense_adjacency(n, pairs)[np.ix_(nodes, nodes)]
    assert np.array_equal(sub.to_csr().toarray(), dense)
