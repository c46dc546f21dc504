"""Command-line entry points for training, grids, the discrete-space oracle,
scoring, margin estimation, and dataset generation."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as datakit
from . import equilibrium as eq
from . import harness
from . import metrics
from . import trainer
from .config import (
    SEED_ENV_VAR,
    apply_seed_override,
    parse_config,
    parse_grid_spec,
    _read_pairs,
)


def _cmd_train(args):
    cfg = apply_seed_override(parse_config(args.config))
    dataset = datakit.resolve_dataset(cfg.dataset)
    out_dir = Path(args.out)
    record = trainer.train_run(cfg, dataset, out_dir)
    print(f"run {record.run_id}: {record.status} ({record.wall_clock_s:.1f}s)")
    if record.status == "completed":
        print(f"  final e_real={record.final_e_real!r} e_fake={record.final_e_fake!r}")
        print(f"  artifacts in {out_dir}")
        return 0
    print(f"  error: {record.error}")
    return 1


def _cmd_grid(args):
    grid = parse_grid_spec(args.spec)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        grid.base_seed = int(env_seed)
    classifier = metrics.ProxyClassifier.load(args.classifier) if args.classifier else None
    result = harness.run_grid(
        grid,
        args.out,
        parallelism=args.parallel,
        classifier=classifier,
        hist_bins=args.bins,
    )
    completed = sum(1 for r in result.records if r.status == "completed")
    print(f"grid {grid.tag}: {completed}/{len(result.records)} runs completed")
    if result.classifier_accuracy is not None:
        print(f"  classifier held-out accuracy: {result.classifier_accuracy:.4f}")
    print(f"  scores: {result.scores_csv}")
    for name, path in sorted(result.histogram_files.items()):
        print(f"  {name}: {path}")
    return 0


_SUITES = ("lemma1", "lemma2", "thm1", "thm2", "all")


def _oracle_reports(suite, trials, tol):
    reports = []
    if suite in ("lemma1", "all"):
        reports.append(
            eq.sweep_scalar_minimizer(trials=trials or 1000, tol=tol or 1e-9)
        )
    if suite in ("lemma2", "all"):
        reports.append(eq.sweep_density_comparison(trials=trials or 100_000))
    if suite in ("thm1", "all"):
        n = trials or 200
        reports.append(
            eq.sweep_equilibrium_value(
                trials_equal=n, trials_unequal=n, tol_equal=tol or 1e-12
            )
        )
    if suite in ("thm2", "all"):
        reports.append(eq.sweep_flat_optimum(trials=trials or 50, tol=tol or 1e-12))
    return reports


def _cmd_oracle(args):
    reports = _oracle_reports(args.suite, args.trials, args.tol)
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        print(
            f"[{rep.name}] trials={rep.trials} failures={rep.failures} "
            f"worst_gap={rep.worst_gap:.3e} {status}"
        )
    summary = {
        "suites": [dataclasses.asdict(rep) for rep in reports],
        "all_passed": all(rep.passed for rep in reports),
    }
    out = Path(args.out)
    out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"summary written to {out}")
    return 0 if summary["all_passed"] else 1


def _cmd_eval(args):
    run_dir = Path(args.run)
    record = trainer.load_record(run_dir)
    if record.status != "completed" or not record.eval_samples_file:
        print(f"run {record.run_id} is not evaluable (status={record.status})")
        return 1
    classifier = metrics.ProxyClassifier.load(args.classifier)
    with np.load(run_dir / record.eval_samples_file) as bundle:
        samples = bundle["samples"]
    score = metrics.modified_inception_score(samples, classifier)
    (run_dir / "eval.json").write_text(
        json.dumps({"i_prime": score, "n_samples": int(len(samples))}, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(f"i_prime = {score!r} over {len(samples)} samples")
    return 0


def _cmd_estimate_margin(args):
    cfg = apply_seed_override(parse_config(args.config))
    dataset = datakit.resolve_dataset(cfg.dataset)
    value = trainer.estimate_margin_for_config(cfg, dataset, steps=args.steps)
    print(f"suggested margin: {value!r}")
    return 0


def _spec_values(path):
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    return {key: raw.strip() for key, raw in _read_pairs(text, str(path))}


def _cmd_make_data(args):
    values = _spec_values(args.spec)
    if args.kind == "ring":
        spec = datakit.RingMixtureSpec(
            modes=int(values.get("modes", 8)),
            radius=float(values.get("radius", 1.0)),
            std=float(values.get("std", 0.05)),
            count=int(values.get("count", 8192)),
            seed=int(values.get("seed", 0)),
        )
        dataset = datakit.gen_ring_mixture(spec)
    else:
        spec = datakit.DigitSpec(
            count=int(values.get("count", 4000)),
            seed=int(values.get("seed", 7)),
            noise_std=float(values.get("noise_std", 0.12)),
            max_shift=int(values.get("max_shift", 1)),
        )
        dataset = datakit.gen_synth_digits(spec)
    datakit.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples of dim {dataset.dim} to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eblab",
        description="Energy-based adversarial training laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="runs/run")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("grid", help="run a grid sweep and report")
    p.add_argument("--spec", required=True)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default="runs")
    p.add_argument("--classifier", default=None)
    p.add_argument("--bins", type=int, default=harness.DEFAULT_HIST_BINS)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("oracle", help="numerically certify the discrete-space analysis")
    p.add_argument("--suite", choices=_SUITES, default="all")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", default="oracle_summary.json")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("eval", help="score a finished run with a classifier")
    p.add_argument("--run", required=True)
    p.add_argument("--classifier", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("estimate-margin", help="auto-encoder-only margin suggestion")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, default=3000)
    p.set_defaults(func=_cmd_estimate_margin)

    p = sub.add_parser("make-data", help="generate a dataset file")
    p.add_argument("kind", choices=("ring", "digits"))
    p.add_argument("--spec", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_data)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
