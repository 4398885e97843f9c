"""Seeded experiment pipeline: train surrogate, attack, defend, evaluate.

Run ``i`` of an experiment uses seed ``master_seed + i`` for data generation
(synthetic source), surrogate training, the attack and the defense.  Accuracy
is always measured on the original test nodes; injected nodes carry no mask.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .attacks import AttackBudget, fga_inject, heuristic_inject, mga_inject
from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .defense import DefenseConfig, baseline_adaedge, baseline_jaccard, chagnn_run
from .errors import ConfigError, UndefinedRatioError
from .graph import homophily_ratio
from .models import TrainConfig, accuracy, fine_tune, predict, pseudo_labels, train


class AttackKind(str, Enum):
    NONE = "none"
    HEURISTIC = "heuristic"
    FGA = "fga"
    MGA = "mga"


class DefenseKind(str, Enum):
    NONE = "none"
    CHAGNN = "chagnn"
    ADAEDGE = "adaedge"
    JACCARD = "jaccard"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    attack: AttackKind = AttackKind.NONE
    budget: AttackBudget = field(default_factory=AttackBudget)
    # when set, overrides budget.num_inject with round(ratio * original node count)
    inject_ratio: float | None = None
    defense: DefenseKind = DefenseKind.NONE
    defense_config: DefenseConfig = field(default_factory=DefenseConfig)
    jaccard_threshold: float = 0.01
    train: TrainConfig = field(default_factory=TrainConfig)
    runs: int = 5
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "attack", AttackKind(self.attack))
        object.__setattr__(self, "defense", DefenseKind(self.defense))
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.inject_ratio is not None and not 0.0 <= self.inject_ratio:
            raise ConfigError("inject_ratio must be non-negative")

    def to_dict(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "synthetic": self.synthetic.to_dict(),
            "attack": self.attack.value,
            "budget": self.budget.to_dict(),
            "inject_ratio": self.inject_ratio,
            "defense": self.defense.value,
            "defense_config": self.defense_config.to_dict(),
            "jaccard_threshold": self.jaccard_threshold,
            "train": self.train.to_dict(),
            "runs": self.runs,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        nested = {"synthetic": SyntheticSpec, "budget": AttackBudget,
                  "defense_config": DefenseConfig, "train": TrainConfig}
        kwargs = {}
        for key, value in raw.items():
            if key in nested:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be an object")
                try:
                    kwargs[key] = nested[key](**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(raw)


@dataclass
class ResultRecord:
    accuracies: list[float]
    histories: list[list[dict]]
    homophily: list[dict]
    wall_time: float
    config: dict

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    def to_dict(self, with_time: bool = True) -> dict:
        out = {
            "config": self.config,
            "accuracies": self.accuracies,
            "mean": self.mean,
            "std": self.std,
            "homophily": self.homophily,
            "histories": self.histories,
        }
        if with_time:
            out["wall_time"] = self.wall_time
        return out


def _homophily(ds: Dataset) -> float | None:
    try:
        return homophily_ratio(ds.graph, ds.labels)
    except UndefinedRatioError:
        return None


def _source(cfg: ExperimentConfig, seed: int) -> Dataset:
    if cfg.dataset_path is not None:
        return load_dataset(cfg.dataset_path)
    return generate_synthetic(cfg.synthetic, seed)


def _budget(cfg: ExperimentConfig, ds: Dataset) -> AttackBudget:
    if cfg.inject_ratio is None:
        return cfg.budget
    return replace(cfg.budget, num_inject=int(round(cfg.inject_ratio * ds.num_nodes)))


def run_once(cfg: ExperimentConfig, run_index: int) -> dict:
    """One seeded pipeline; returns accuracy, defense history and homophily before/after."""
    seed = cfg.master_seed + run_index
    ds = _source(cfg, seed)
    tcfg = cfg.train
    budget = _budget(cfg, ds)
    if cfg.attack is AttackKind.NONE or budget.num_inject == 0:
        poisoned = heuristic_inject(ds, replace(budget, num_inject=0), seed)
    elif cfg.attack is AttackKind.HEURISTIC:
        poisoned = heuristic_inject(ds, budget, seed)
    else:
        surrogate = train(ds, tcfg, seed)[0]
        attack = fga_inject if cfg.attack is AttackKind.FGA else mga_inject
        poisoned = attack(ds, budget, surrogate, seed)
    data = poisoned.merged
    # the defender trains on the poisoned graph
    params = train(data, tcfg, seed)[0]
    history: list[dict] = []
    if cfg.defense is DefenseKind.CHAGNN:
        params, data, history = chagnn_run(poisoned, cfg.defense_config, tcfg, seed, pretrained=params)
    elif cfg.defense is DefenseKind.ADAEDGE:
        data = baseline_adaedge(poisoned, pseudo_labels(predict(data, params)))
        params = fine_tune(params, data, tcfg)
    elif cfg.defense is DefenseKind.JACCARD:
        data = baseline_jaccard(poisoned, cfg.jaccard_threshold)
        params = train(data, tcfg, seed)[0]
    acc = accuracy(pseudo_labels(predict(data, params)), data.labels, data.test_mask)
    return {
        "accuracy": acc,
        "history": history,
        "homophily": {"attacked": _homophily(poisoned.merged), "final": _homophily(data)},
    }


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, completed: list | None = None) -> ResultRecord:
    """All runs of ``cfg``; results are ordered by run index whatever ``jobs`` is.

    Finished runs are appended to ``completed`` as they arrive, so a caller
    still has them if a later run raises.
    """
    start = time.perf_counter()
    outs = [] if completed is None else completed
    if jobs > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for out in pool.map(run_once, [cfg] * cfg.runs, range(cfg.runs)):
                outs.append(out)
    else:
        for i in range(cfg.runs):
            outs.append(run_once(cfg, i))
    return ResultRecord(
        accuracies=[o["accuracy"] for o in outs],
        histories=[o["history"] for o in outs],
        homophily=[o["homophily"] for o in outs],
        wall_time=time.perf_counter() - start,
        config=cfg.to_dict(),
    )


SWEEP_COLUMNS = ("parameter", "value", "mean", "std", "runs", "accuracies")


def sweep(cfg: ExperimentConfig, parameter: str, values, jobs: int = 1) -> list[dict]:
    """One row per swept value of ``inject_ratio`` or ``q`` (the elimination rate)."""
    rows = []
    for value in values:
        if parameter == "inject_ratio":
            point = replace(cfg, inject_ratio=float(value))
        elif parameter == "q":
            point = replace(cfg, defense_config=replace(cfg.defense_config, elimination_rate=float(value)))
        else:
            raise ConfigError(f"cannot sweep over {parameter!r}; use inject_ratio or q")
        rec = run_experiment(point, jobs)
        rows.append({"parameter": parameter, "value": float(value), "mean": rec.mean, "std": rec.std,
                     "runs": point.runs, "accuracies": rec.accuracies})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    """CSV text with columns ``SWEEP_COLUMNS``; per-run accuracies are ``;``-joined."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r["parameter"], repr(r["value"]), repr(r["mean"]), repr(r["std"]), r["runs"],
                    ";".join(repr(a) for a in r["accuracies"])])
    return buf.getvalue()
