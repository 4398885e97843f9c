"""Node-classification datasets: container, synthetic generators and directory IO."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .graph import SparseGraph, build_graph, largest_component_nodes

UNKNOWN = -1


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        n = self.graph.num_nodes
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise InputError(f"features must be {n} x D, got shape {feats.shape}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        for name in ("train_mask", "val_mask", "test_mask"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != (n,):
                raise InputError(f"{name} must have length {n}")
            object.__setattr__(self, name, m)
        if self.labels.shape != (n,):
            raise InputError(f"labels must have length {n}")
        overlap = (self.train_mask & self.val_mask) | (self.train_mask & self.test_mask) | (self.val_mask & self.test_mask)
        if overlap.any():
            raise InputError(f"masks overlap at node {int(np.flatnonzero(overlap)[0])}")
        known = self.labels[self.train_mask | self.val_mask]
        if len(known) and (known.min() < 0 or known.max() >= self.num_classes):
            raise InputError("train/val labels must lie in [0, num_classes)")

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def labeled_nodes(self) -> np.ndarray:
        """V_L: nodes whose labels the defender may use (train and validation)."""
        return np.flatnonzero(self.train_mask | self.val_mask)

    def with_graph(self, graph: SparseGraph) -> "Dataset":
        if graph.num_nodes != self.num_nodes:
            raise InputError("replacement graph has a different node count")
        return Dataset(graph, self.features, self.labels, self.num_classes,
                       self.train_mask, self.val_mask, self.test_mask)

    def subset(self, nodes) -> "Dataset":
        nodes = np.asarray(nodes, dtype=np.int64)
        return Dataset(self.graph.subgraph(nodes), self.features[nodes], self.labels[nodes],
                       self.num_classes, self.train_mask[nodes], self.val_mask[nodes],
                       self.test_mask[nodes])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.train_mask, other.train_mask)
            and np.array_equal(self.val_mask, other.val_mask)
            and np.array_equal(self.test_mask, other.test_mask)
        )

    __hash__ = None


def largest_connected_component(ds: Dataset) -> Dataset:
    nodes = largest_component_nodes(ds.graph)
    if len(nodes) == ds.num_nodes:
        return ds
    return ds.subset(nodes)


def stratified_split(labels, rng: np.random.Generator, train: float = 0.1, val: float = 0.1):
    """Per-class seeded shuffle into train/val/test masks (the remainder is test)."""
    labels = np.asarray(labels)
    n = len(labels)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    for c in np.unique(labels[labels >= 0]):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(train * len(idx)))
        n_val = int(round(val * len(idx)))
        masks[0][idx[:n_train]] = True
        masks[1][idx[n_train:n_train + n_val]] = True
        masks[2][idx[n_train + n_val:]] = True
    return tuple(masks)


# ---------------------------------------------------------------- synthetic

class GraphModel(str, Enum):
    DREGULAR = "dregular"
    CSBM = "csbm"


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 3
    nodes_per_class: int = 400
    degree: int = 10
    homophily: float = 0.8
    feature_strength: float = 0.9
    model: GraphModel = GraphModel.CSBM

    def __post_init__(self):
        object.__setattr__(self, "model", GraphModel(self.model))
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.nodes_per_class < 1 or self.degree < 0:
            raise ConfigError("nodes_per_class must be >= 1 and degree >= 0")
        if not 0.0 <= self.homophily <= 1.0:
            raise ConfigError("homophily must lie in [0, 1]")
        if not 0.0 <= self.feature_strength <= 1.0:
            raise ConfigError("feature_strength must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "nodes_per_class": self.nodes_per_class,
            "degree": self.degree,
            "homophily": self.homophily,
            "feature_strength": self.feature_strength,
            "model": self.model.value,
        }


def class_features(labels, num_classes: int, strength: float) -> np.ndarray:
    """``strength * onehot(y) + (1 - strength) / C`` for every node."""
    labels = np.asarray(labels)
    x = np.full((len(labels), num_classes), (1.0 - strength) / num_classes)
    x[np.arange(len(labels)), labels] += strength
    return x


def _integral(value: float, what: str) -> int:
    k = int(round(value))
    if abs(value - k) > 1e-9:
        raise ConfigError(f"{what} = {value:g} is not a whole number of edges")
    return k


def _match(left: np.ndarray, right: np.ndarray | None, rng, tries: int = 100) -> np.ndarray:
    """Random perfect matching of stubs, retried until simple.

    ``right=None`` pairs the stubs of ``left`` among themselves.  After ``tries``
    failures the best attempt is kept with its self-pairs and repeated pairs
    dropped, which costs the affected nodes one edge each.
    """
    best, best_bad = None, None
    for _ in range(tries):
        if right is None:
            s = left[rng.permutation(len(left))]
            pairs = s.reshape(-1, 2)
        else:
            pairs = np.stack([left, right[rng.permutation(len(right))]], axis=1)
        canon = np.sort(pairs, axis=1)
        _, first = np.unique(canon, axis=0, return_index=True)
        ok = np.zeros(len(pairs), dtype=bool)
        ok[first] = True
        ok &= canon[:, 0] != canon[:, 1]
        bad = int((~ok).sum())
        if best_bad is None or bad < best_bad:
            best, best_bad = pairs[ok], bad
        if bad == 0:
            break
    return best


def _dregular_edges(spec: SyntheticSpec, labels: np.ndarray, rng) -> np.ndarray:
    c, n, d = spec.num_classes, spec.nodes_per_class, spec.degree
    k_same = _integral(d * spec.homophily, "degree * homophily")
    k_out = d - k_same
    if (n * k_same) % 2:
        raise ConfigError("nodes_per_class * same-class degree must be even")
    if (n * k_out) % (c - 1):
        raise ConfigError("cross-class stubs cannot be split evenly over the other classes")
    members = [np.flatnonzero(labels == k) for k in range(c)]
    # stubs[k][j]: stubs of class k aimed at class j; each node spreads its
    # k_out cross stubs round-robin so per-node counts differ by at most one
    stubs = [[[] for _ in range(c)] for _ in range(c)]
    for k in range(c):
        others = [j for j in range(c) if j != k]
        for i, v in enumerate(members[k]):
            for s in range(k_out):
                stubs[k][others[(i * k_out + s) % (c - 1)]].append(v)
    edges = []
    for k in range(c):
        if k_same:
            edges.append(_match(np.repeat(members[k], k_same), None, rng))
        for j in range(k + 1, c):
            left, right = np.array(stubs[k][j], dtype=np.int64), np.array(stubs[j][k], dtype=np.int64)
            if len(left):
                edges.append(_match(left, right, rng))
    return np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)


def _csbm_edges(spec: SyntheticSpec, labels: np.ndarray, rng) -> np.ndarray:
    c, n, d, h = spec.num_classes, spec.nodes_per_class, spec.degree, spec.homophily
    p_in = d * h / (n - 1) if n > 1 else 0.0
    p_out = d * (1 - h) / (n * (c - 1))
    if p_in > 1 or p_out > 1:
        raise ConfigError("degree too large for the class sizes")
    members = [np.flatnonzero(labels == k) for k in range(c)]
    edges = []
    for k in range(c):
        for j in range(k, c):
            draw = rng.random((n, n))
            if j == k:
                hit = np.triu(draw < p_in, 1)
            else:
                hit = draw < p_out
            r, s = np.nonzero(hit)
            edges.append(np.stack([members[k][r], members[j][s]], axis=1))
    return np.concatenate(edges)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Dataset:
    """Class-structured graph with the deterministic class-feature model.

    Nodes are numbered class by class.  ``dregular`` wires exact stub counts
    (``degree * homophily`` same-class stubs per node, the rest spread evenly
    over the other classes); ``csbm`` draws independent edges whose expected
    counts match the same targets.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(spec.num_classes), spec.nodes_per_class)
    if spec.model is GraphModel.DREGULAR:
        edges = _dregular_edges(spec, labels, rng)
    else:
        edges = _csbm_edges(spec, labels, rng)
    graph = build_graph(edges, len(labels))
    features = class_features(labels, spec.num_classes, spec.feature_strength)
    train, val, test = stratified_split(labels, rng)
    return Dataset(graph, features, labels, spec.num_classes, train, val, test)


# ---------------------------------------------------------------------- IO

def save_dataset(ds: Dataset, dir_path) -> Path:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.tsv", "w", newline="\n") as fh:
        for u, v in ds.graph.edge_array().tolist():
            fh.write(f"{u}\t{v}\n")
    # %.17g round-trips every double exactly
    np.savetxt(d / "features.csv", ds.features, fmt="%.17g", delimiter=",", newline="\n")
    with open(d / "labels.csv", "w", newline="\n") as fh:
        fh.writelines(f"{int(y)}\n" for y in ds.labels)
    meta = {"num_nodes": ds.num_nodes, "num_features": ds.num_features, "num_classes": ds.num_classes}
    (d / "meta.json").write_text(json.dumps(meta) + "\n")
    splits = {
        "train": np.flatnonzero(ds.train_mask).tolist(),
        "val": np.flatnonzero(ds.val_mask).tolist(),
        "test": np.flatnonzero(ds.test_mask).tolist(),
    }
    (d / "splits.json").write_text(json.dumps(splits) + "\n")
    return d


def _require(path: Path) -> Path:
    if not path.is_file():
        raise FormatError("missing file", path)
    return path


def _read_json(path: Path) -> dict:
    try:
        return json.loads(_require(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None


def _read_features(path: Path, n: int, dim: int) -> np.ndarray:
    rows = []
    with open(_require(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(t) for t in line.split(",")]
            except ValueError:
                raise FormatError("non-numeric feature value", path, lineno) from None
            if len(row) != dim:
                raise FormatError(f"expected {dim} values, found {len(row)}", path, lineno)
            rows.append(row)
    if len(rows) != n:
        raise FormatError(f"expected {n} feature rows, found {len(rows)}", path)
    return np.array(rows, dtype=float).reshape(n, dim)


def load_dataset(dir_path) -> Dataset:
    d = Path(dir_path)
    meta = _read_json(d / "meta.json")
    try:
        n, dim, c = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])
    except (KeyError, TypeError, ValueError):
        raise FormatError("meta.json needs integer num_nodes, num_features, num_classes", d / "meta.json") from None

    path = _require(d / "labels.csv")
    labels = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            y = int(line)
        except ValueError:
            raise FormatError("label is not an integer", path, lineno) from None
        if y < -1 or y >= c:
            raise FormatError(f"label {y} outside [-1, {c})", path, lineno)
        labels.append(y)
    if len(labels) != n:
        raise FormatError(f"expected {n} labels, found {len(labels)}", path)

    features = _read_features(d / "features.csv", n, dim)

    path = _require(d / "edges.tsv")
    edges = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            u, v = (int(t) for t in parts)
        except ValueError:
            raise FormatError("expected 'u<TAB>v' with integer ids", path, lineno) from None
        if not (0 <= u < n and 0 <= v < n):
            raise FormatError(f"node id out of range for {n} nodes", path, lineno)
        edges.append((u, v))

    path = d / "splits.json"
    splits = _read_json(path)
    masks = []
    for name in ("train", "val", "test"):
        ids = np.asarray(splits.get(name, []), dtype=np.int64)
        if len(ids) and (ids.min() < 0 or ids.max() >= n):
            raise FormatError(f"split '{name}' has an out-of-range node id", path)
        m = np.zeros(n, dtype=bool)
        m[ids] = True
        masks.append(m)
    if (masks[0] & masks[1]).any() or (masks[0] & masks[2]).any() or (masks[1] & masks[2]).any():
        raise FormatError("splits overlap", path)
    labels = np.array(labels, dtype=np.int64)
    if (labels[masks[0] | masks[1]] < 0).any():
        raise FormatError("train/val node with unknown label", path)
    return Dataset(build_graph(edges, n), features, labels, c, *masks)
