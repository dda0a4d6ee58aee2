"""Command line: train, report, oracle, validate, cpd-eval.

Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..checkpoint import CheckpointError
from ..envs import ConfigError, NoPathError
from .config import ExperimentConfigError, load_config, validate_config
from .report import AlignmentError, write_report

OK, CONFIG_ERROR, RUNTIME_ERROR = 0, 1, 2


def _train(args) -> int:
    from .runner import run

    cfg = load_config(args.config)
    results = run(cfg, jobs=args.jobs, seed_offset=args.seed_offset)
    for r in results:
        print(f"seed {r.seed}: {'ok' if r.ok else 'FAILED ' + r.error} -> {r.csv}")
    return OK if all(r.ok for r in results) else RUNTIME_ERROR


def _report(args) -> int:
    write_report(args.dirs, args.out)
    print((Path(args.out) / "summary.md").read_text(), end="")
    return OK


def _oracle(args) -> int:
    from .oracle import oracle

    print(json.dumps(oracle(args.env, episodes=args.episodes, seed=args.seed)))
    return OK


def _validate(args) -> int:
    cfg, errors = validate_config(args.config)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    print(json.dumps(cfg.to_dict(), indent=2))
    return OK


def _mean_or_none(vals: list[float]) -> float | None:
    return float(np.mean(vals)) if vals else None


def run_cpd_accuracy(run_dir) -> dict:
    """Mean per-episode boundary precision/recall/F1 per seed, over the episodes that were scored."""
    out = {}
    for path in sorted(Path(run_dir).glob("metrics_seed*.csv")):
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["cpd_f1"] != ""]
        seed = path.stem.removeprefix("metrics_seed")
        out[seed] = {k: _mean_or_none([float(r[f"cpd_{k}"]) for r in rows]) for k in ("p", "r", "f1")}
        out[seed]["episodes"] = len(rows)
    return out


def _cpd_eval(args) -> int:
    if args.synthetic:
        from ..cpd import evaluate_synthetic, synthetic_dataset, train_synthetic_detector

        model = train_synthetic_detector(np.random.default_rng(args.seed), steps=args.steps)
        data = synthetic_dataset(np.random.default_rng(args.seed + 1000), args.sequences)
        acc = evaluate_synthetic(model, data)
        print(json.dumps({"precision": acc.precision, "recall": acc.recall, "f1": acc.f1}))
        return OK
    if args.run is None:
        print("error: cpd-eval needs --run DIR or --synthetic", file=sys.stderr)
        return CONFIG_ERROR
    summary = run_cpd_accuracy(args.run)
    if not summary:
        print(f"error: no metrics CSVs under {args.run}", file=sys.stderr)
        return RUNTIME_ERROR
    scored = [v for v in summary.values() if v["episodes"]]
    overall = {k: _mean_or_none([v[k] for v in scored]) for k in ("p", "r", "f1")}
    print(json.dumps({"seeds": summary, "mean": overall}, indent=2))
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpdoc", description="Change-point-guided Option-Critic experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", aliases=["run"], help="train every seed of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed-offset", type=int, default=0)
    p.set_defaults(func=_train)

    p = sub.add_parser("report", help="aggregate run directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_report)

    p = sub.add_parser("oracle", help="BFS optimum or random-policy floor for an environment file")
    p.add_argument("--env", required=True)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_oracle)

    p = sub.add_parser("validate", help="check a config and print it with defaults resolved")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_validate)

    p = sub.add_parser("cpd-eval", help="boundary accuracy of a run, or a synthetic train-and-score check")
    p.add_argument("--run")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--sequences", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cpd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ExperimentConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    except (AlignmentError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except (ConfigError, json.JSONDecodeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (NoPathError, RuntimeError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
