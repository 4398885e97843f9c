"""Sparse undirected graphs in compressed-row form.

Graphs are immutable: every edit returns a new :class:`SparseGraph`.  The
adjacency is stored once per direction (``u -> v`` and ``v -> u``), with
sorted, duplicate-free rows and no self-loops.  Self-loops only appear inside
:func:`normalize_adjacency`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InputError, UndefinedRatioError


@dataclass(frozen=True, eq=False)
class SparseGraph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    __hash__ = None

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.col_indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < len(row) and row[i] == v)

    def edge_array(self) -> np.ndarray:
        """Undirected edges as an ``(E, 2)`` array with ``u < v``, lexicographically sorted."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices))
        return sp.csr_matrix(
            (data, self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )

    def is_symmetric(self) -> bool:
        a = self.to_csr()
        return (a != a.T).nnz == 0

    def with_edges_removed(self, pairs) -> "SparseGraph":
        pairs = _as_pairs(pairs)
        if len(pairs) == 0:
            return self
        drop = set(map(tuple, np.sort(pairs, axis=1).tolist()))
        edges = [e for e in map(tuple, self.edge_array().tolist()) if e not in drop]
        return build_graph(edges, self.num_nodes)

    def with_edges_added(self, pairs, num_nodes: int | None = None) -> "SparseGraph":
        n = self.num_nodes if num_nodes is None else num_nodes
        if n < self.num_nodes:
            raise InputError("cannot shrink a graph by adding edges")
        pairs = _as_pairs(pairs)
        return build_graph(np.concatenate([self.edge_array(), pairs]), n)

    def subgraph(self, nodes) -> "SparseGraph":
        """Induced subgraph on ``nodes``, reindexed in the given order."""
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.num_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        e = self.edge_array()
        e = remap[e]
        e = e[(e >= 0).all(axis=1)]
        return build_graph(e, len(nodes))


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Weighted sparse matrix ``D^-1/2 (A + I) D^-1/2`` (or a row-normalized variant)."""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights.copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()


def _as_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"expected a list of node pairs, got shape {arr.shape}")
    return arr


def build_graph(edges, num_nodes: int) -> SparseGraph:
    """Symmetrize, deduplicate and sort ``edges``; self-pairs are dropped."""
    if num_nodes < 0:
        raise InputError("num_nodes must be non-negative")
    e = _as_pairs(edges)
    if len(e) and (e.min() < 0 or e.max() >= num_nodes):
        bad = e[(e < 0).any(axis=1) | (e >= num_nodes).any(axis=1)][0]
        raise InputError(f"edge {tuple(bad.tolist())} out of range for {num_nodes} nodes")
    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]])
    if len(both):
        keys = np.unique(both[:, 0] * num_nodes + both[:, 1])
        rows, cols = keys // num_nodes, keys % num_nodes
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return SparseGraph(num_nodes, offsets, cols.astype(np.int64))


def normalize_adjacency(g: SparseGraph, mode: str = "sym") -> NormalizedAdjacency:
    """Add self-loops and normalize.

    ``mode="sym"`` gives the GCN propagation matrix ``D^-1/2 (A+I) D^-1/2``.
    ``mode="row"`` gives ``D^-1 (A+I)``, whose rows are convex weights over the
    closed neighborhood.
    """
    n = g.num_nodes
    a = g.to_csr() + sp.identity(n, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    deg = np.asarray(a.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(n), np.diff(a.indptr))
    if mode == "sym":
        inv = 1.0 / np.sqrt(deg)
        w = inv[rows] * inv[a.indices]
    elif mode == "row":
        w = 1.0 / deg[rows]
    else:
        raise InputError(f"unknown normalization mode {mode!r}")
    return NormalizedAdjacency(n, a.indptr.astype(np.int64), a.indices.astype(np.int64), w)


def spmm(a: NormalizedAdjacency, m: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ m``.

    scipy's CSR kernel walks rows in order and each row's entries in stored
    (ascending column) order, so the accumulation order is fixed.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] != a.num_nodes:
        raise InputError(f"dimension mismatch: adjacency is {a.num_nodes}x{a.num_nodes}, matrix has {m.shape[0]} rows")
    return np.asarray(a.to_csr() @ m)


def homophily_ratio(g: SparseGraph, labels) -> float:
    """Fraction of undirected edges joining same-label endpoints.

    Edges touching a node with a negative (unknown) label are not counted.
    """
    labels = np.asarray(labels)
    e = g.edge_array()
    lu, lv = labels[e[:, 0]], labels[e[:, 1]]
    known = (lu >= 0) & (lv >= 0)
    total = int(known.sum())
    if total == 0:
        raise UndefinedRatioError("homophily ratio undefined: no edges with two labeled endpoints")
    return float(((lu == lv) & known).sum() / total)


def component_labels(g: SparseGraph) -> np.ndarray:
    _, comp = connected_components(g.to_csr(), directed=False)
    return comp


def largest_component_nodes(g: SparseGraph) -> np.ndarray:
    """Sorted node ids of the largest component; ties go to the component holding the smallest id."""
    if g.num_nodes == 0:
        return np.zeros(0, dtype=np.int64)
    comp = component_labels(g)
    sizes = np.bincount(comp)
    first = np.full(len(sizes), g.num_nodes)
    np.minimum.at(first, comp, np.arange(g.num_nodes))
    candidates = np.flatnonzero(sizes == sizes.max())
    winner = candidates[np.argmin(first[candidates])]
    return np.flatnonzero(comp == winner)
