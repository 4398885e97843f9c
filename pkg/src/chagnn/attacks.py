"""Graph injection attacks.

Every attack appends ``num_inject`` new nodes after the original ones and only
ever touches the injected blocks of the adjacency and feature matrices: the
original-to-original block stays exactly as it was.

The gradient attacks start from :func:`heuristic_inject` and then alternate
greedy edge rewiring (scored by the gradient of the surrogate's cross-entropy
on the target nodes with respect to each edge indicator, taken through the
symmetric normalization) with sign-gradient ascent on the injected features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import UNKNOWN, Dataset, load_dataset, save_dataset
from .errors import ConfigError, FormatError, InputError
from .graph import build_graph, normalize_adjacency
from .models import GcnParams, _dlogits, _gcn_tape, cross_entropy, gcn_backward


@dataclass(frozen=True)
class AttackBudget:
    num_inject: int = 0
    inject_degree: int = 1
    feature_min: float | None = None
    feature_max: float | None = None
    opt_iters: int = 20
    step_size: float = 0.2
    momentum: float = 0.9

    def __post_init__(self):
        if self.num_inject < 0:
            raise ConfigError("num_inject must be non-negative")
        if self.num_inject > 0 and self.inject_degree < 1:
            raise ConfigError("inject_degree must be at least 1 when injecting")
        if (self.feature_min is not None and self.feature_max is not None
                and self.feature_min > self.feature_max):
            raise ConfigError("feature_min exceeds feature_max")
        if self.opt_iters < 0 or self.step_size < 0:
            raise ConfigError("opt_iters and step_size must be non-negative")

    def bounds(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate bounds; unset ends default to the clean feature range."""
        lo = features.min(axis=0) if self.feature_min is None else np.full(features.shape[1], self.feature_min)
        hi = features.max(axis=0) if self.feature_max is None else np.full(features.shape[1], self.feature_max)
        return lo.astype(float), hi.astype(float)

    def to_dict(self) -> dict:
        return {
            "num_inject": self.num_inject,
            "inject_degree": self.inject_degree,
            "feature_min": self.feature_min,
            "feature_max": self.feature_max,
            "opt_iters": self.opt_iters,
            "step_size": self.step_size,
            "momentum": self.momentum,
        }


@dataclass(frozen=True, eq=False)
class PoisonedDataset:
    base: Dataset
    injected_ids: np.ndarray
    merged: Dataset
    target_set: np.ndarray
    feature_lo: np.ndarray | None = None
    feature_hi: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, PoisonedDataset):
            return NotImplemented
        return (self.base == other.base and self.merged == other.merged
                and np.array_equal(self.injected_ids, other.injected_ids)
                and np.array_equal(self.target_set, other.target_set))

    __hash__ = None


def merge(base: Dataset, edges, inject_features: np.ndarray) -> Dataset:
    """Dataset over ``N + N_I`` nodes: original graph plus ``edges``, injected rows appended."""
    n_i = len(inject_features)
    n = base.num_nodes + n_i
    all_edges = np.concatenate([base.graph.edge_array(), np.asarray(edges, dtype=np.int64).reshape(-1, 2)])
    pad = np.zeros(n_i, dtype=bool)
    return Dataset(
        build_graph(all_edges, n),
        np.vstack([base.features, np.asarray(inject_features, dtype=float).reshape(n_i, base.num_features)]),
        np.concatenate([base.labels, np.full(n_i, UNKNOWN)]),
        base.num_classes,
        np.concatenate([base.train_mask, pad]),
        np.concatenate([base.val_mask, pad]),
        np.concatenate([base.test_mask, pad]),
    )


def _injected_edges(merged: Dataset, n_orig: int) -> np.ndarray:
    e = merged.graph.edge_array()
    return e[e[:, 1] >= n_orig]


def heuristic_inject(ds: Dataset, budget: AttackBudget, seed: int) -> PoisonedDataset:
    """Wire each injected node to ``inject_degree`` distinct random test nodes.

    Injected features start at the clean mean feature vector, clipped to the
    bounds.  The target set is every test node that received an edge.
    """
    rng = np.random.default_rng(seed)
    lo, hi = budget.bounds(ds.features)
    if budget.num_inject == 0:
        return PoisonedDataset(ds, np.zeros(0, dtype=np.int64), ds, np.zeros(0, dtype=np.int64), lo, hi)
    test = np.flatnonzero(ds.test_mask)
    if budget.inject_degree > len(test):
        raise ConfigError(f"inject_degree {budget.inject_degree} exceeds the {len(test)} test nodes")
    n = ds.num_nodes
    ids = np.arange(n, n + budget.num_inject)
    edges = []
    for k in ids:
        for t in rng.choice(test, size=budget.inject_degree, replace=False):
            edges.append((int(t), int(k)))
    edges = np.array(edges, dtype=np.int64)
    feats = np.tile(np.clip(ds.features.mean(axis=0), lo, hi), (budget.num_inject, 1))
    merged = merge(ds, edges, feats)
    return PoisonedDataset(ds, ids, merged, np.unique(edges[:, 0]), lo, hi)


def _edge_scores(merged: Dataset, surrogate: GcnParams, targets: np.ndarray):
    """d(loss)/d(edge indicator) for every node pair, and d(loss)/dX.

    For an undirected indicator e_ij the chain rule through
    ``D^-1/2 (A + I) D^-1/2`` gives ``(G_ij + G_ji)/sqrt(d_i d_j) + c_i + c_j``
    with ``G = dL/dA_hat`` and ``c_k = -(sum_v G_kv A_kv + G_vk A_vk) / (2 d_k)``.
    """
    adj = normalize_adjacency(merged.graph)
    a = adj.to_csr()
    x = merged.features
    tape = _gcn_tape(a, x, surrogate)
    dlog = _dlogits(tape.probs, merged.labels, targets)
    _, _, g, dx = gcn_backward(a, x, surrogate, tape, dlog, wrt_inputs=True)
    deg = merged.graph.degrees() + 1.0
    ga = np.asarray(a.multiply(g).sum(axis=1)).ravel() + np.asarray(a.multiply(g).sum(axis=0)).ravel()
    c = -0.5 * ga / deg
    inv = 1.0 / np.sqrt(deg)
    score = (g + g.T) * np.outer(inv, inv) + c[:, None] + c[None, :]
    return score, dx


def attack_loss(merged: Dataset, surrogate: GcnParams, targets) -> float:
    """Mean cross-entropy of the surrogate on the targets (the quantity the attacker raises)."""
    a = normalize_adjacency(merged.graph).to_csr()
    probs = _gcn_tape(a, merged.features, surrogate).probs
    return cross_entropy(probs, merged.labels, np.asarray(targets))


def _predict(merged: Dataset, params: GcnParams) -> np.ndarray:
    a = normalize_adjacency(merged.graph).to_csr()
    return np.argmax(_gcn_tape(a, merged.features, params).logits, axis=1)


def _propose(adj, scores, cand, self_col, n, degree_cap):
    """One candidate move per injected node from gradient ``scores``.

    A move adds the best absent edge while under the degree cap, swaps the
    best addition for the best removal at the cap, or drops an edge outright,
    whichever the first-order estimate favors.  Returns ``(gain, node, cols)``
    triples with positive estimated gain, best first.
    """
    gain = np.where(adj, -scores, scores)
    gain[np.arange(len(adj)), self_col] = -np.inf
    inj_cols = np.flatnonzero(cand >= n)
    full = adj[cand[inj_cols] - n].sum(axis=1) >= degree_cap
    moves = []
    for i in range(len(adj)):
        deg_i = int(adj[i].sum())
        adds = np.where(~adj[i], gain[i], -np.inf)
        rems = np.where(adj[i], gain[i], -np.inf)
        # an injected partner must also stay within its degree budget
        adds[inj_cols[full & ~adj[i, inj_cols]]] = -np.inf
        j_add, j_rem = int(np.argmax(adds)), int(np.argmax(rems))
        best_add, best_rem = adds[j_add], rems[j_rem]
        options = []
        if deg_i < degree_cap and best_add > 0:
            options.append((best_add, [j_add]))
        if deg_i >= degree_cap and np.isfinite(best_add) and np.isfinite(best_rem) and best_add + best_rem > 0:
            options.append((best_add + best_rem, [j_add, j_rem]))
        if deg_i > 1 and best_rem > 0:
            options.append((best_rem, [j_rem]))
        if options:
            g, cols = max(options, key=lambda o: o[0])
            moves.append((float(g), i, cols))
    moves.sort(key=lambda m: (-m[0], m[1]))
    return moves


def _apply(adj, moves, cand, self_col, n, degree_cap):
    new_adj = adj.copy()
    for _, i, cols in moves:
        trial = new_adj.copy()
        for j in cols:
            trial[i, j] = ~trial[i, j]
            if cand[j] >= n:
                trial[cand[j] - n, self_col[i]] = trial[i, j]
        touched = [i] + [cand[j] - n for j in cols if cand[j] >= n]
        if all(0 < trial[t].sum() <= degree_cap for t in touched):
            new_adj = trial
    return new_adj


def _gradient_attack(ds: Dataset, budget: AttackBudget, surrogate: GcnParams, seed: int,
                     momentum: float, trace: list | None = None) -> PoisonedDataset:
    if surrogate.w1.shape[0] != ds.num_features or surrogate.w2.shape[1] != ds.num_classes:
        raise InputError(f"surrogate {surrogate.shape} does not fit dataset "
                         f"({ds.num_features} features, {ds.num_classes} classes)")
    start = heuristic_inject(ds, budget, seed)
    if budget.num_inject == 0 or budget.opt_iters == 0:
        return start
    n = ds.num_nodes
    ids = start.injected_ids
    targets = start.target_set
    lo, hi = start.feature_lo, start.feature_hi
    # candidate partners: the targets (A_OI block) and the other injected nodes (A_I block)
    cand = np.concatenate([targets, ids])
    adj = np.zeros((len(ids), len(cand)), dtype=bool)
    col = {int(v): j for j, v in enumerate(cand)}
    for u, v in _injected_edges(start.merged, n).tolist():
        adj[v - n, col[u]] = True
        if u >= n:
            adj[u - n, col[v]] = True
    feats = start.merged.features[n:].copy()
    self_col = np.array([col[int(k)] for k in ids])

    def build(adj_state, feat_state):
        r, cidx = np.nonzero(adj_state)
        keep = ids[r] > cand[cidx]  # each injected-injected pair once
        pairs = np.stack([ids[r], cand[cidx]], axis=1)[keep | (cand[cidx] < n)]
        return merge(ds, pairs, feat_state)

    merged = start.merged
    loss = attack_loss(merged, surrogate, targets)
    if trace is not None:
        trace.append(loss)
    edge_mom = np.zeros(adj.shape)
    feat_mom = np.zeros(feats.shape)
    span = hi - lo
    for _ in range(budget.opt_iters):
        # steer by the targets the surrogate still gets right; acceptance uses all targets
        correct = targets[_predict(merged, surrogate)[targets] == merged.labels[targets]]
        focus = correct if len(correct) else targets
        score, dx = _edge_scores(merged, surrogate, focus)
        edge_mom = momentum * edge_mom + score[np.ix_(ids, cand)]
        feat_mom = momentum * feat_mom + dx[n:]
        progressed = False
        moves = _propose(adj, edge_mom, cand, self_col, n, budget.inject_degree)
        # backtrack: keep halving the batch of best moves until the loss does not drop
        k = len(moves)
        while k > 0:
            new_adj = _apply(adj, moves[:k], cand, self_col, n, budget.inject_degree)
            trial = build(new_adj, feats)
            trial_loss = attack_loss(trial, surrogate, targets)
            if trial_loss >= loss and not np.array_equal(new_adj, adj):
                adj, merged, loss, progressed = new_adj, trial, trial_loss, True
                break
            k //= 2
        step = budget.step_size
        for _ in range(4):
            new_feats = np.clip(feats + step * span * np.sign(feat_mom), lo, hi)
            if np.array_equal(new_feats, feats):
                break
            trial = build(adj, new_feats)
            trial_loss = attack_loss(trial, surrogate, targets)
            if trial_loss >= loss:
                feats, merged, loss, progressed = new_feats, trial, trial_loss, True
                break
            step /= 2
        if not progressed:
            break
        if trace is not None:
            trace.append(loss)
    return PoisonedDataset(ds, ids, merged, targets, lo, hi)


def fga_inject(ds: Dataset, budget: AttackBudget, surrogate: GcnParams, seed: int,
               trace: list | None = None) -> PoisonedDataset:
    """Gradient-greedy rewiring plus feature ascent, restricted to the injected blocks.

    A round is kept only if the surrogate's target loss does not go down; the
    first round that would lower it ends the attack.  ``trace`` (if given)
    collects the accepted losses.
    """
    return _gradient_attack(ds, budget, surrogate, seed, 0.0, trace)


def mga_inject(ds: Dataset, budget: AttackBudget, surrogate: GcnParams, seed: int,
               trace: list | None = None) -> PoisonedDataset:
    """As :func:`fga_inject` with momentum-accumulated gradients ``g_t = mu g_{t-1} + grad_t``."""
    return _gradient_attack(ds, budget, surrogate, seed, budget.momentum, trace)


def verify_injection_constraints(p: PoisonedDataset) -> str | None:
    """Return ``None`` when every injection invariant holds, else a description of the first violation."""
    base, merged = p.base, p.merged
    n = base.num_nodes
    ids = np.asarray(p.injected_ids)
    if merged.num_nodes != n + len(ids) or not np.array_equal(ids, np.arange(n, n + len(ids))):
        return f"injected ids must be {n}..{n + len(ids) - 1}"
    e = merged.graph.edge_array()
    inner = e[e[:, 1] < n]
    base_e = base.graph.edge_array()
    if len(inner) != len(base_e) or not np.array_equal(inner, base_e):
        base_set = set(map(tuple, base_e.tolist()))
        inner_set = set(map(tuple, inner.tolist()))
        added = sorted(inner_set - base_set)
        if added:
            return f"edge {added[0]} joins two original nodes"
        return f"original edge {sorted(base_set - inner_set)[0]} was removed"
    if not np.array_equal(merged.features[:n], base.features):
        row = int(np.flatnonzero((merged.features[:n] != base.features).any(axis=1))[0])
        return f"features of original node {row} were modified"
    if not np.array_equal(merged.labels[:n], base.labels):
        return "labels of original nodes were modified"
    if (merged.labels[n:] != UNKNOWN).any():
        k = int(np.flatnonzero(merged.labels[n:] != UNKNOWN)[0]) + n
        return f"injected node {k} has a known label"
    if p.feature_lo is not None:
        xi = merged.features[n:]
        bad = (xi < p.feature_lo - 1e-12) | (xi > p.feature_hi + 1e-12)
        if bad.any():
            r, c = map(int, np.argwhere(bad)[0])
            return f"feature {c} of injected node {n + r} is {xi[r, c]:g}, outside [{p.feature_lo[c]:g}, {p.feature_hi[c]:g}]"
    for name in ("train_mask", "val_mask", "test_mask"):
        if getattr(merged, name)[n:].any():
            return f"injected node appears in {name}"
    return None


def save_poisoned(p: PoisonedDataset, dir_path) -> Path:
    d = save_dataset(p.merged, dir_path)
    doc = {"injected_ids": [int(i) for i in p.injected_ids], "targets": [int(t) for t in p.target_set]}
    (d / "injected.json").write_text(json.dumps(doc) + "\n")
    return d


def load_poisoned(dir_path) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Load a poisoned directory: ``(merged dataset, injected ids, targets)``."""
    d = Path(dir_path)
    merged = load_dataset(d)
    path = d / "injected.json"
    if not path.is_file():
        raise FormatError("missing file", path)
    try:
        doc = json.loads(path.read_text())
        ids = np.asarray(doc["injected_ids"], dtype=np.int64)
        targets = np.asarray(doc["targets"], dtype=np.int64)
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad injected.json: {exc}", path) from None
    return merged, ids, targets
