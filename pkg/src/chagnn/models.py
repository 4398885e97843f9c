"""Two-layer GCN and SGC in plain numpy, with hand-written backprop.

Soft-label matrices are ordinary ``(N, C)`` float arrays whose rows sum to one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .errors import FormatError, InputError
from .graph import NormalizedAdjacency, normalize_adjacency, spmm

LOG_FLOOR = 1e-12


class OptimizerKind(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 200
    weight_decay: float = 5e-4
    hidden_dim: int = 16
    patience: int = 30
    fine_tune_epochs: int = 50
    optimizer: OptimizerKind = OptimizerKind.ADAM

    def __post_init__(self):
        object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise InputError("max_epochs must be at least 1")
        if self.hidden_dim < 1:
            raise InputError("hidden_dim must be at least 1")
        if self.weight_decay < 0 or self.patience < 0 or self.fine_tune_epochs < 0:
            raise InputError("weight_decay, patience and fine_tune_epochs must be non-negative")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "weight_decay": self.weight_decay,
            "hidden_dim": self.hidden_dim,
            "patience": self.patience,
            "fine_tune_epochs": self.fine_tune_epochs,
            "optimizer": self.optimizer.value,
        }


@dataclass
class GcnParams:
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w1.shape[1] != self.w2.shape[0]:
            raise InputError(f"incompatible weight shapes {self.w1.shape} and {self.w2.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.w2]

    def copy(self) -> "GcnParams":
        return GcnParams(self.w1.copy(), self.w2.copy())

    def __eq__(self, other):
        if not isinstance(other, GcnParams):
            return NotImplemented
        return np.array_equal(self.w1, other.w1) and np.array_equal(self.w2, other.w2)


@dataclass
class SgcParams:
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 2:
            raise InputError("SGC weight must be a matrix")

    def arrays(self) -> list[np.ndarray]:
        return [self.w]

    def __eq__(self, other):
        if not isinstance(other, SgcParams):
            return NotImplemented
        return np.array_equal(self.w, other.w)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_gcn(num_features: int, hidden: int, num_classes: int, seed) -> GcnParams:
    rng = np.random.default_rng(seed)
    return GcnParams(glorot(rng, num_features, hidden), glorot(rng, hidden, num_classes))


# ------------------------------------------------------------------ forward

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_dims(adj: NormalizedAdjacency, x: np.ndarray, d_in: int):
    if x.shape[0] != adj.num_nodes:
        raise InputError(f"feature rows ({x.shape[0]}) != nodes ({adj.num_nodes})")
    if x.shape[1] != d_in:
        raise InputError(f"feature width {x.shape[1]} does not match weights ({d_in} rows)")


@dataclass
class _GcnTape:
    ax: np.ndarray  # A X
    h1: np.ndarray  # A X W1
    r: np.ndarray   # relu(h1)
    ar: np.ndarray  # A relu(h1)
    logits: np.ndarray
    probs: np.ndarray


def _gcn_tape(a: sp.csr_matrix, x: np.ndarray, params: GcnParams, ax=None) -> _GcnTape:
    if ax is None:
        ax = np.asarray(a @ x)
    h1 = ax @ params.w1
    r = np.maximum(h1, 0.0)
    ar = np.asarray(a @ r)
    logits = ar @ params.w2
    return _GcnTape(ax, h1, r, ar, logits, softmax(logits))


def gcn_logits(adj: NormalizedAdjacency, x, params: GcnParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_dims(adj, x, params.w1.shape[0])
    return _gcn_tape(adj.to_csr(), x, params).logits


def gcn_forward(adj: NormalizedAdjacency, x, params: GcnParams) -> np.ndarray:
    """``softmax(A relu(A X W1) W2)`` row-wise."""
    return softmax(gcn_logits(adj, x, params))


def sgc_forward(adj: NormalizedAdjacency, x, params: SgcParams) -> tuple[np.ndarray, np.ndarray]:
    """Return the logits ``A^2 X W`` and their row softmax."""
    x = np.asarray(x, dtype=float)
    _check_dims(adj, x, params.w.shape[0])
    z = spmm(adj, spmm(adj, x)) @ params.w
    return z, softmax(z)


def cm_loss(z, true_class: int) -> float:
    """Classification margin: true-class logit minus the best other logit."""
    z = np.asarray(z, dtype=float).ravel()
    if len(z) < 2:
        raise InputError("classification margin needs at least two classes")
    if not 0 <= true_class < len(z):
        raise InputError(f"true_class {true_class} outside [0, {len(z)})")
    others = np.delete(z, true_class)
    return float(z[true_class] - others.max())


def pseudo_labels(probs) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class
    return np.argmax(np.asarray(probs), axis=1)


def accuracy(pred, labels, mask) -> float:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask
    if len(idx) == 0:
        raise InputError("accuracy over an empty mask")
    return float(np.mean(np.asarray(pred)[idx] == np.asarray(labels)[idx]))


def cross_entropy(probs: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    p = probs[idx, labels[idx]]
    return float(-np.mean(np.log(np.maximum(p, LOG_FLOOR))))


# ----------------------------------------------------------------- backward

def _dlogits(probs: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy over ``idx`` with respect to the logits."""
    g = np.zeros_like(probs)
    g[idx] = probs[idx]
    g[idx, labels[idx]] -= 1.0
    g /= len(idx)
    return g


def gcn_backward(a: sp.csr_matrix, x: np.ndarray, params: GcnParams, tape: _GcnTape,
                 dlogits: np.ndarray, wrt_inputs: bool = False):
    """Backprop ``dlogits`` through the GCN.

    Returns ``(dW1, dW2)``, and additionally ``(dA, dX)`` when ``wrt_inputs``.
    ``dA`` is dense and treats every entry of the normalized adjacency as a
    free variable; ``a`` must be symmetric.
    """
    dw2 = tape.ar.T @ dlogits
    dar = dlogits @ params.w2.T
    dr = np.asarray(a @ dar)
    dh1 = dr * (tape.h1 > 0)
    dw1 = tape.ax.T @ dh1
    if not wrt_inputs:
        return dw1, dw2
    m1 = x @ params.w1
    m2 = tape.r @ params.w2
    da = dlogits @ m2.T + dh1 @ m1.T
    dx = np.asarray(a @ (dh1 @ params.w1.T))
    return dw1, dw2, da, dx


def training_loss(adj: NormalizedAdjacency, x, params: GcnParams, labels, idx, weight_decay: float) -> float:
    probs = gcn_forward(adj, x, params)
    reg = 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in params.arrays())
    return cross_entropy(probs, np.asarray(labels), np.asarray(idx)) + reg


def loss_and_grads(adj: NormalizedAdjacency, x, params: GcnParams, labels, idx,
                   weight_decay: float, _a=None, _ax=None):
    """Mean cross-entropy over ``idx`` plus ``weight_decay/2 * ||W||^2`` and its gradient."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    idx = np.asarray(idx)
    a = adj.to_csr() if _a is None else _a
    tape = _gcn_tape(a, x, params, _ax)
    dw1, dw2 = gcn_backward(a, x, params, tape, _dlogits(tape.probs, labels, idx))
    reg = 0.5 * weight_decay * (np.sum(params.w1 ** 2) + np.sum(params.w2 ** 2))
    loss = cross_entropy(tape.probs, labels, idx) + float(reg)
    grads = GcnParams(dw1 + weight_decay * params.w1, dw2 + weight_decay * params.w2)
    return loss, grads, tape


def sgc_loss_and_grad(adj: NormalizedAdjacency, x, params: SgcParams, labels, idx):
    """Mean cross-entropy of the SGC over ``idx`` and its gradient in ``W``."""
    a2x = spmm(adj, spmm(adj, np.asarray(x, dtype=float)))
    probs = softmax(a2x @ params.w)
    labels, idx = np.asarray(labels), np.asarray(idx)
    g = a2x.T @ _dlogits(probs, labels, idx)
    return cross_entropy(probs, labels, idx), g


# ---------------------------------------------------------------- training

class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer is OptimizerKind.ADAM:
        return Adam(cfg.learning_rate)
    return Sgd(cfg.learning_rate)


def train(ds: Dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0,
          adj: NormalizedAdjacency | None = None):
    """Train a fresh GCN; returns ``(best-validation params, per-epoch history)``.

    On the first epoch the freshly initialized weights are not eligible as the
    best checkpoint, so ``max_epochs=1`` always returns trained weights.
    """
    if not ds.train_mask.any():
        raise InputError("no labeled training nodes")
    init = init_gcn(ds.num_features, cfg.hidden_dim, ds.num_classes, seed)
    adj = normalize_adjacency(ds.graph) if adj is None else adj
    # one mandatory step, then the shared checkpointing loop
    a = adj.to_csr()
    train_idx = np.flatnonzero(ds.train_mask)
    opt = make_optimizer(cfg)
    params = init.copy()
    loss, grads, _ = loss_and_grads(adj, ds.features, params, ds.labels, train_idx, cfg.weight_decay, a)
    opt.step(params.arrays(), grads.arrays())
    first = _epoch_record(1, loss, adj, ds, params)
    best, history = _continue(ds, params, cfg, opt, cfg.max_epochs - 1, cfg.patience, adj, first)
    return best, history


def _epoch_record(epoch, loss, adj, ds, params):
    probs = gcn_forward(adj, ds.features, params)
    pred = pseudo_labels(probs)
    train_idx = np.flatnonzero(ds.train_mask)
    select_idx = np.flatnonzero(ds.val_mask) if ds.val_mask.any() else train_idx
    return {
        "epoch": epoch,
        "train_loss": loss,
        "val_loss": cross_entropy(probs, ds.labels, select_idx),
        "train_acc": accuracy(pred, ds.labels, train_idx),
        "val_acc": accuracy(pred, ds.labels, select_idx),
    }


def _continue(ds, params, cfg, opt, epochs, patience, adj, start_record=None):
    a = adj.to_csr()
    x = ds.features
    ax = np.asarray(a @ x)
    labels = ds.labels
    train_idx = np.flatnonzero(ds.train_mask)
    select_idx = np.flatnonzero(ds.val_mask) if ds.val_mask.any() else train_idx
    params = params.copy()
    history = []
    if start_record is None:
        best_val = cross_entropy(_gcn_tape(a, x, params, ax).probs, labels, select_idx)
    else:
        history.append(start_record)
        best_val = start_record["val_loss"]
    best = params.copy()
    stale = 0
    for epoch in range(len(history) + 1, len(history) + epochs + 1):
        loss, grads, _ = loss_and_grads(adj, x, params, labels, train_idx, cfg.weight_decay, a, ax)
        opt.step(params.arrays(), grads.arrays())
        probs = _gcn_tape(a, x, params, ax).probs
        pred = pseudo_labels(probs)
        val_loss = cross_entropy(probs, labels, select_idx)
        history.append({
            "epoch": epoch,
            "train_loss": loss,
            "val_loss": val_loss,
            "train_acc": accuracy(pred, labels, train_idx),
            "val_acc": accuracy(pred, labels, select_idx),
        })
        if val_loss < best_val:
            best_val, best, stale = val_loss, params.copy(), 0
        else:
            stale += 1
            if patience is not None and stale >= patience:
                break
    return best, history


def fine_tune(params: GcnParams, ds: Dataset, cfg: TrainConfig = TrainConfig(),
              adj: NormalizedAdjacency | None = None, return_history: bool = False):
    """Continue training from ``params`` for ``cfg.fine_tune_epochs`` epochs.

    Optimizer state starts fresh; no early stopping; the best-validation
    checkpoint (the input included) is returned.
    """
    if params.w1.shape[0] != ds.num_features or params.w2.shape[1] != ds.num_classes:
        raise InputError(f"parameters {params.shape} do not fit a dataset with "
                         f"{ds.num_features} features and {ds.num_classes} classes")
    adj = normalize_adjacency(ds.graph) if adj is None else adj
    best, history = _continue(ds, params, cfg, make_optimizer(cfg), cfg.fine_tune_epochs, None, adj)
    return (best, history) if return_history else best


def predict(ds: Dataset, params: GcnParams, adj: NormalizedAdjacency | None = None) -> np.ndarray:
    adj = normalize_adjacency(ds.graph) if adj is None else adj
    return gcn_forward(adj, ds.features, params)


# ------------------------------------------------------------ verification

def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def gradient_check(ds: Dataset, params: GcnParams, epsilon: float = 1e-5,
                   weight_decay: float = 5e-4) -> float:
    """Max coordinate-wise relative error between backprop and central differences."""
    adj = normalize_adjacency(ds.graph)
    idx = np.flatnonzero(ds.train_mask)
    _, grads, _ = loss_and_grads(adj, ds.features, params, ds.labels, idx, weight_decay)
    worst = 0.0
    probe = params.copy()
    for w, g in zip(probe.arrays(), grads.arrays()):
        fd = np.zeros_like(w)
        for i in np.ndindex(w.shape):
            keep = w[i]
            w[i] = keep + epsilon
            up = training_loss(adj, ds.features, probe, ds.labels, idx, weight_decay)
            w[i] = keep - epsilon
            down = training_loss(adj, ds.features, probe, ds.labels, idx, weight_decay)
            w[i] = keep
            fd[i] = (up - down) / (2 * epsilon)
        worst = max(worst, _relative_error(g, fd))
    return worst


# ------------------------------------------------------------- checkpoints

def save_params(params, path) -> Path:
    """JSON checkpoint: shape header plus row-major weights (``repr`` floats round-trip exactly)."""
    path = Path(path)
    if isinstance(params, GcnParams):
        d, h, c = params.shape
        doc = {"model": "gcn", "D": d, "H": h, "C": c,
               "w1": params.w1.ravel().tolist(), "w2": params.w2.ravel().tolist()}
    elif isinstance(params, SgcParams):
        d, c = params.w.shape
        doc = {"model": "sgc", "D": d, "C": c, "w": params.w.ravel().tolist()}
    else:
        raise InputError(f"cannot save {type(params).__name__}")
    path.write_text(json.dumps(doc))
    return path


def load_params(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        if doc["model"] == "gcn":
            d, h, c = int(doc["D"]), int(doc["H"]), int(doc["C"])
            return GcnParams(np.array(doc["w1"], dtype=float).reshape(d, h),
                             np.array(doc["w2"], dtype=float).reshape(h, c))
        if doc["model"] == "sgc":
            d, c = int(doc["D"]), int(doc["C"])
            return SgcParams(np.array(doc["w"], dtype=float).reshape(d, c))
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad checkpoint: {exc}", path) from None
    raise FormatError(f"unknown model kind {doc.get('model')!r}", path)
