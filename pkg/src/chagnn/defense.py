"""Cooperative homophilous augmentation and two edge-pruning baselines.

One cleaning pass flags edges around the modified nodes whose endpoints
disagree (true label against pseudo-label when the neighbor is labeled,
pseudo-label against pseudo-label otherwise), scores each flagged edge by the
base-2 Jensen-Shannon divergence of the endpoint soft labels, and removes a
``q`` fraction of them by score-weighted sampling.  :func:`chagnn_run`
alternates that pass with fine-tuning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attacks import PoisonedDataset
from .data import Dataset
from .errors import InputError, UndefinedRatioError
from .graph import SparseGraph, homophily_ratio, normalize_adjacency
from .models import (GcnParams, TrainConfig, accuracy, fine_tune, gcn_forward,
                     pseudo_labels, train)


@dataclass(frozen=True)
class DefenseConfig:
    elimination_rate: float = 0.10
    max_iter: int = 5

    def __post_init__(self):
        if not 0.0 <= self.elimination_rate <= 1.0:
            raise InputError("elimination_rate must lie in [0, 1]")
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")

    def to_dict(self) -> dict:
        return {"elimination_rate": self.elimination_rate, "max_iter": self.max_iter}


def _unwrap(ds) -> tuple[Dataset, np.ndarray]:
    if isinstance(ds, PoisonedDataset):
        return ds.merged, np.asarray(ds.injected_ids, dtype=np.int64)
    return ds, np.zeros(0, dtype=np.int64)


def modified_node_set(ds) -> np.ndarray:
    """Test nodes plus injected nodes, sorted."""
    data, injected = _unwrap(ds)
    return np.union1d(np.flatnonzero(data.test_mask), injected).astype(np.int64)


def identify_heterophilous(graph: SparseGraph, v_m, v_l, true_labels, pseudo) -> np.ndarray:
    """Unordered pairs ``(u, v)``, ``u < v``, flagged from some ``u`` in ``v_m``; sorted."""
    n = graph.num_nodes
    in_m = np.zeros(n, dtype=bool)
    in_m[np.asarray(v_m, dtype=np.int64)] = True
    in_l = np.zeros(n, dtype=bool)
    in_l[np.asarray(v_l, dtype=np.int64)] = True
    true_labels = np.asarray(true_labels)
    pseudo = np.asarray(pseudo)
    src = np.repeat(np.arange(n), graph.degrees())
    dst = graph.col_indices
    sel = in_m[src]
    u, v = src[sel], dst[sel]
    ref = np.where(in_l[v], true_labels[v], pseudo[v])
    hit = ref != pseudo[u]
    pairs = np.sort(np.stack([u[hit], v[hit]], axis=1), axis=1)
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(pairs, axis=0)


def _check_distribution(p: np.ndarray, name: str):
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-6:
        raise InputError(f"{name} is not a probability vector")


def _xlog2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a * log2(a / b)`` with 0 log 0 = 0."""
    out = np.zeros(np.broadcast(a, b).shape)
    pos = a > 0
    out[pos] = a[pos] * np.log2(a[pos] / b[pos])
    return out


def js_divergence(p_row, q_row) -> float:
    """Jensen-Shannon divergence in bits; 0 for identical rows, 1 for disjoint supports."""
    p = np.asarray(p_row, dtype=float)
    q = np.asarray(q_row, dtype=float)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    if p.shape != q.shape:
        raise InputError("distributions have different lengths")
    m = 0.5 * (p + q)
    value = 0.5 * _xlog2(p, m).sum() + 0.5 * _xlog2(q, m).sum()
    return float(min(max(value, 0.0), 1.0))


def js_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise :func:`js_divergence` for two ``(E, C)`` soft-label arrays."""
    m = 0.5 * (p + q)
    value = 0.5 * _xlog2(p, m).sum(axis=1) + 0.5 * _xlog2(q, m).sum(axis=1)
    return np.clip(value, 0.0, 1.0)


def sampling_probs(scores) -> np.ndarray:
    """Softmax of the heterophily scores over the whole flagged set."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise InputError("cannot build a sampling distribution over no edges")
    e = np.exp(s - s.max())
    return e / e.sum()


def elimination_count(q: float, size: int) -> int:
    # tolerance guards products like 0.29 * 100 = 28.999999999999996
    return min(size, int(math.floor(q * size + 1e-9)))


def eliminate_edges(graph: SparseGraph, edges, probs, q: float, seed) -> tuple[SparseGraph, np.ndarray]:
    """Remove ``floor(q * |edges|)`` flagged edges, drawn one at a time without replacement.

    Each draw picks among the remaining edges with probability proportional to
    ``probs``.  Returns the cleaned graph and the removed pairs in draw order.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    k = elimination_count(q, len(edges))
    if k == 0:
        return graph, np.zeros((0, 2), dtype=np.int64)
    w = np.asarray(probs, dtype=float).copy()
    if w.shape != (len(edges),):
        raise InputError("probabilities are not aligned with the edge list")
    rng = np.random.default_rng(seed)
    picked = []
    for _ in range(k):
        total = w.sum()
        if total <= 0:
            # only zero-weight edges remain: fall back to uniform over them
            w = np.where(np.isin(np.arange(len(w)), picked), 0.0, 1.0)
            total = w.sum()
        i = int(np.searchsorted(np.cumsum(w / total), rng.random(), side="right"))
        i = min(i, len(w) - 1)
        while w[i] == 0:  # numerical edge case at the top of the cdf
            i -= 1
        picked.append(i)
        w[i] = 0.0
    removed = edges[picked]
    return graph.with_edges_removed(removed), removed


def clean_once(data: Dataset, probs: np.ndarray, v_m, q: float, seed):
    """One cleaning pass. Returns ``(cleaned graph, flagged pairs, removed pairs)``."""
    pseudo = pseudo_labels(probs)
    flagged = identify_heterophilous(data.graph, v_m, data.labeled_nodes(), data.labels, pseudo)
    if len(flagged) == 0:
        return data.graph, flagged, np.zeros((0, 2), dtype=np.int64)
    scores = js_rows(probs[flagged[:, 0]], probs[flagged[:, 1]])
    graph, removed = eliminate_edges(data.graph, flagged, sampling_probs(scores), q, seed)
    return graph, flagged, removed


def _homophily_or_nan(data: Dataset) -> float:
    try:
        return homophily_ratio(data.graph, data.labels)
    except UndefinedRatioError:
        return float("nan")


def _record(it: int, data: Dataset, params: GcnParams, he_size: int, removed: int) -> dict:
    probs = gcn_forward(normalize_adjacency(data.graph), data.features, params)
    pred = pseudo_labels(probs)
    return {
        "iter": it,
        "removed": removed,
        "he_size": he_size,
        "val_acc": accuracy(pred, data.labels, data.val_mask) if data.val_mask.any() else float("nan"),
        "test_acc": accuracy(pred, data.labels, data.test_mask) if data.test_mask.any() else float("nan"),
        "homophily": _homophily_or_nan(data),
    }


def chagnn_run(ds, cfg: DefenseConfig = DefenseConfig(), tcfg: TrainConfig = TrainConfig(),
               seed: int = 0, pretrained: GcnParams | None = None):
    """Pretrain, then ``max_iter`` rounds of (label, clean, fine-tune).

    ``ds`` may be a :class:`Dataset` or a :class:`PoisonedDataset`; removals
    accumulate across rounds.  Returns ``(params, cleaned dataset, history)``
    where history holds one record for the pretrained model (``iter`` 0) and
    one per round.
    """
    data, _ = _unwrap(ds)
    v_m = modified_node_set(ds)
    params = train(data, tcfg, seed)[0] if pretrained is None else pretrained
    history = [_record(0, data, params, 0, 0)]
    for it in range(1, cfg.max_iter + 1):
        probs = gcn_forward(normalize_adjacency(data.graph), data.features, params)
        graph, flagged, removed = clean_once(data, probs, v_m, cfg.elimination_rate, [seed, it])
        data = data.with_graph(graph)
        params = fine_tune(params, data, tcfg)
        history.append(_record(it, data, params, len(flagged), len(removed)))
    return params, data, history


def baseline_adaedge(ds, pseudo, v_m=None) -> Dataset:
    """Drop every flagged edge outright (no divergence scores, no sampling).

    Flags are computed around the same modified-node set the main defense
    uses unless ``v_m`` says otherwise.
    """
    data, _ = _unwrap(ds)
    v_m = modified_node_set(ds) if v_m is None else v_m
    flagged = identify_heterophilous(data.graph, v_m, data.labeled_nodes(), data.labels, pseudo)
    return data.with_graph(data.graph.with_edges_removed(flagged))


def jaccard_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Jaccard index of the supports (``x > 0``) of two feature arrays.

    Two empty supports count as identical (index 1).
    """
    a, b = a > 0, b > 0
    inter = (a & b).sum(axis=1)
    union = (a | b).sum(axis=1)
    return np.where(union == 0, 1.0, inter / np.maximum(union, 1))


def baseline_jaccard(ds, threshold: float) -> Dataset:
    """Drop every edge whose endpoint feature supports have Jaccard index below ``threshold``."""
    data, _ = _unwrap(ds)
    e = data.graph.edge_array()
    if len(e) == 0:
        return data
    sim = jaccard_similarity(data.features[e[:, 0]], data.features[e[:, 1]])
    return data.with_graph(data.graph.with_edges_removed(e[sim < threshold]))
