"""Command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 a verification check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .data import SyntheticSpec, generate_synthetic, save_dataset
from .errors import ConfigError, DegenerateScenarioError, FormatError, InputError, UndefinedRatioError
from .experiment import ExperimentConfig, load_config, run_experiment, sweep, sweep_csv
from .theory import TheoremScenario, theorem1_check, theorem1_grid, theorem2_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECK = 4


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def _tolerance(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid tolerance {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("tolerance must be positive")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(path, text: str):
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def cmd_synth(args) -> int:
    spec = SyntheticSpec()
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
            spec = SyntheticSpec(**raw)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad synthetic spec {args.config}: {exc}") from None
    ds = generate_synthetic(spec, args.seed or 0)
    try:
        out = save_dataset(ds, args.out)
    except OSError as exc:
        raise ConfigError(f"cannot write dataset to {args.out}: {exc}") from None
    print(_dump({"out": str(out), "num_nodes": ds.num_nodes, "num_edges": ds.graph.num_edges,
                 "spec": spec.to_dict(), "seed": args.seed or 0}), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    done: list[dict] = []
    try:
        rec = run_experiment(cfg, args.jobs, completed=done)
    except Exception:
        if args.out:
            _write(args.out, _dump({"config": cfg.to_dict(), "complete": False, "runs": done}))
        raise
    payload = rec.to_dict(with_time=False)
    payload["complete"] = True
    if args.out:
        # no timing in the file so identical configs give identical bytes
        _write(args.out, _dump(payload))
    payload["wall_time"] = rec.wall_time
    print(_dump(payload), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args)
    rows = sweep(cfg, args.vary, args.values, args.jobs)
    text = sweep_csv(rows)
    if args.out:
        _write(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_verify_theorems(args) -> int:
    grid, skipped = [], []
    if args.degenerate_only:
        scenarios = [TheoremScenario(c, 2 * a, a, a, l) for c in args.classes
                     for a in range(2, 7) for l in (1, 2, 4)]
    else:
        scenarios = list(theorem1_grid(classes=args.classes))
    for sc in scenarios:
        res = theorem1_check(sc, args.seed or 0, args.tol)
        (skipped if res["degenerate"] else grid).append(res)
    bounds = []
    if not args.degenerate_only:
        for l in (1, 4):
            sc = TheoremScenario(2, 4, 3, 1, l)
            for i, p in enumerate(args.accuracies):
                rep = theorem2_check(sc, p, args.samples, seed=[args.seed or 0, l, i])
                bounds.append({"p": p, "l": l, "bound": rep.bound, "bound_tight": rep.bound_tight,
                               "ratio_est": rep.ratio_est, "ratio_upper": rep.ratio_upper,
                               "p1_est": rep.p1_est, "p2_est": rep.p2_est, "pass": rep.passed})
    ok = all(r["pass"] for r in grid) and all(b["pass"] for b in bounds)
    report = {"pass": ok, "theorem1": grid, "theorem1_skipped": [r["scenario"] for r in skipped],
              "theorem2": bounds}
    text = _dump(report)
    if args.out:
        _write(args.out, text)
    print(text, end="")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chagnn", description="Injection attacks and homophily-based defense for GCNs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output path")
        if runs:
            p.add_argument("--runs", type=_positive, help="override the number of runs")
            p.add_argument("--jobs", type=_positive, default=1, help="parallel worker processes")

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run a seeded attack/defense experiment")
    common(p, runs=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep the injection ratio or the elimination rate")
    common(p, runs=True)
    p.add_argument("--vary", choices=["inject_ratio", "q"], required=True)
    p.add_argument("--values", type=_floats, required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-theorems", help="numerically check the removal analysis")
    common(p)
    p.add_argument("--tol", type=_tolerance, default=1e-8, help="tolerance for the ratio identity")
    p.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples per accuracy")
    p.add_argument("--classes", type=_ints, default=[2, 3, 5])
    p.add_argument("--accuracies", type=_floats, default=[0.6, 0.7, 0.8, 0.9])
    p.add_argument("--degenerate-only", action="store_true", help="only a == b scenarios (all skipped)")
    p.set_defaults(func=cmd_verify_theorems)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not args.out:
        parser.error("synth requires --out")
    try:
        return args.func(args)
    except (FormatError, UndefinedRatioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DegenerateScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
