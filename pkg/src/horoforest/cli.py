"""Command-line surface: train, predict, eval, cv, gridsearch, synth.

All commands emit machine-readable JSON (JSON-lines for CV and grid
tables) and are deterministic given their seed arguments. Exit codes: 0
success, 1 computation failure, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .data import Dataset, SyntheticTreeSpec, generate_synthetic_tree, load_csv, save_csv, stratified_kfold
from .forest import (
    ForestModel,
    ForestParams,
    fit_forest,
    load_model,
    predict_matrix,
    predict_proba_matrix,
    save_model,
)
from .metrics import aupr, macro_f1, micro_f1
from .splitter import SplitterConfig
from .tree import TreeParams, tree_depth

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2

_SPLITTER_MODES = {
    "optimizer": "optimizer",
    "axis-aligned": "axis_aligned_enum",
    "random-ideal": "random_ideal_fallback",
}
_DEFAULT_BETA_GRID = "0,0.9,0.99,0.999,0.9999"
_M_GRID_PRESETS = {"small": "1,3,5", "large": "3,7,11"}


def _default_workers() -> int:
    return int(os.environ.get("HOROFOREST_WORKERS", "1"))


def _add_forest_args(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("forest parameters")
    group.add_argument("--trees", type=int, default=100, help="number of trees (default 100)")
    group.add_argument("--min-samples", type=int, default=1, help="stop splitting at this node size")
    group.add_argument("--max-depth", type=int, default=None, help="depth cap (default unlimited)")
    group.add_argument("--beta", type=float, default=0.9, help="class-balance strength in [0, 1)")
    group.add_argument("--no-class-balance", action="store_true", help="disable loss re-weighting")
    group.add_argument("--no-hyperclasses", action="store_true", help="disable class-merge candidates")
    group.add_argument(
        "--splitter",
        choices=sorted(_SPLITTER_MODES),
        default="optimizer",
        help="split search strategy",
    )
    group.add_argument("--c-exp-min", type=int, default=-3, help="low end of the 2^n slack draw")
    group.add_argument("--c-exp-max", type=int, default=5, help="high end of the 2^n slack draw")
    group.add_argument("--restarts", type=int, default=3, help="optimizer restarts per problem")
    group.add_argument("--max-iters", type=int, default=1000, help="optimizer iteration cap")
    group.add_argument("--tol", type=float, default=1e-6, help="relative loss-change tolerance")
    group.add_argument("--fallback-ideals", type=int, default=10, help="random ideal points on fallback")
    group.add_argument("--no-bootstrap", action="store_true", help="train every tree on the full data")
    group.add_argument("--seed", type=int, default=0, help="master random seed")
    group.add_argument(
        "--workers",
        type=int,
        default=None,
        help="parallel workers (default $HOROFOREST_WORKERS or 1)",
    )


def _forest_params(args, seed=None, min_samples=None, beta=None) -> ForestParams:
    splitter = SplitterConfig(
        beta=args.beta if beta is None else beta,
        use_hyperclasses=not args.no_hyperclasses,
        use_class_balance=not args.no_class_balance,
        mode=_SPLITTER_MODES[args.splitter],
        max_iters=args.max_iters,
        tol=args.tol,
        restarts=args.restarts,
        n_fallback_ideals=args.fallback_ideals,
    )
    tree_params = TreeParams(
        min_samples=args.min_samples if min_samples is None else min_samples,
        max_depth=args.max_depth,
        splitter=splitter,
        c_exponent_range=(args.c_exp_min, args.c_exp_max),
        seed=0,
    )
    return ForestParams(
        n_trees=args.trees,
        tree_params=tree_params,
        bootstrap=not args.no_bootstrap,
        seed=args.seed if seed is None else seed,
    )


def _workers(args) -> int:
    return args.workers if args.workers is not None else _default_workers()


def _emit(obj, out_path=None):
    text = json.dumps(obj)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _emit_lines(records, out_path=None):
    lines = "".join(json.dumps(r) + "\n" for r in records)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)


def cmd_train(args) -> int:
    dataset = load_csv(args.data)
    params = _forest_params(args)
    start = time.perf_counter()
    model = fit_forest(
        dataset.points, dataset.labels, params,
        class_names=dataset.class_names, n_workers=_workers(args),
    )
    elapsed = time.perf_counter() - start
    save_model(model, args.model_out)
    depths = [tree_depth(t) for t in model.trees]
    preds = predict_matrix(model, dataset.points)
    summary = {
        "command": "train",
        "data": str(args.data),
        "model": str(args.model_out),
        "n_samples": len(dataset),
        "dim": dataset.dim,
        "class_names": dataset.class_names,
        "n_trees": params.n_trees,
        "training_accuracy": micro_f1(dataset.labels, preds),
        "tree_depth": {
            "min": int(min(depths)),
            "mean": float(np.mean(depths)),
            "max": int(max(depths)),
        },
        "wall_time_s": elapsed,
    }
    _emit(summary, args.summary_out)
    return EXIT_OK


def _load_model_and_data(model_path, data_path) -> tuple[ForestModel, Dataset]:
    model = load_model(model_path)
    dataset = load_csv(data_path)
    if dataset.dim != model.dim:
        raise ValueError(f"dimension mismatch: model has {model.dim}, data has {dataset.dim}")
    return model, dataset


def cmd_predict(args) -> int:
    model, dataset = _load_model_and_data(args.model, args.data)
    probs = predict_proba_matrix(model, dataset.points)
    preds = predict_matrix(model, dataset.points)
    header = ["index", "predicted"] + [f"prob_{name}" for name in model.class_names]
    lines = [",".join(header)]
    for i, (p, row) in enumerate(zip(preds, probs)):
        lines.append(",".join([str(i), model.class_names[p]] + [repr(float(v)) for v in row]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _metric_report(model: ForestModel, dataset: Dataset, metric: str) -> dict:
    preds = predict_matrix(model, dataset.points)
    report: dict = {"n_samples": len(dataset)}
    if metric in ("micro-f1", "all"):
        report["micro_f1"] = micro_f1(dataset.labels, preds)
    if metric in ("macro-f1", "all"):
        report["macro_f1"] = macro_f1(dataset.labels, preds)
    if metric in ("aupr", "all"):
        probs = predict_proba_matrix(model, dataset.points)
        per_class = {}
        for k, name in enumerate(model.class_names):
            y_bin = (dataset.labels == k).astype(int)
            if 0 < y_bin.sum() < y_bin.size:
                per_class[name] = aupr(y_bin, probs[:, k])
            else:
                per_class[name] = None
        report["aupr"] = {"per_class": per_class}
        if len(model.class_names) == 2:
            report["aupr"]["positive"] = per_class[model.class_names[1]]
    return report


def cmd_eval(args) -> int:
    model, dataset = _load_model_and_data(args.model, args.data)
    if dataset.class_names != model.class_names:
        raise ValueError(
            f"class-name mismatch: model has {model.class_names}, data has {dataset.class_names}"
        )
    report = {"command": "eval", "model": str(args.model), "data": str(args.data)}
    report.update(_metric_report(model, dataset, args.metric))
    _emit(report, args.out)
    return EXIT_OK


def _fold_scores(dataset: Dataset, params: ForestParams, n_folds, trial, base_seed, workers):
    """Scores for every fold of one CV trial."""
    plan_seed = int(np.random.SeedSequence([base_seed, trial]).generate_state(1)[0])
    plan = stratified_kfold(dataset.labels, n_folds, plan_seed)
    records = []
    for fold in range(n_folds):
        train_idx, test_idx = plan.fold_indices(fold)
        fold_seed = int(np.random.SeedSequence([base_seed, trial, fold]).generate_state(1)[0])
        model = fit_forest(
            dataset.points[train_idx],
            dataset.labels[train_idx],
            replace(params, seed=fold_seed),
            class_names=dataset.class_names,
            n_workers=workers,
        )
        preds = predict_matrix(model, dataset.points[test_idx])
        record = {
            "trial": trial,
            "fold": fold,
            "n_train": int(train_idx.size),
            "n_test": int(test_idx.size),
            "micro_f1": micro_f1(dataset.labels[test_idx], preds),
            "macro_f1": macro_f1(dataset.labels[test_idx], preds),
        }
        if len(dataset.class_names) == 2:
            probs = predict_proba_matrix(model, dataset.points[test_idx])
            y_bin = (dataset.labels[test_idx] == 1).astype(int)
            if 0 < y_bin.sum() < y_bin.size:
                record["aupr"] = aupr(y_bin, probs[:, 1])
        records.append(record)
    return records


def _aggregate(records, n_trials):
    metrics = [k for k in ("micro_f1", "macro_f1", "aupr") if all(k in r for r in records)]
    agg = {}
    for metric in metrics:
        trial_means = [
            float(np.mean([r[metric] for r in records if r["trial"] == t])) for t in range(n_trials)
        ]
        agg[metric] = {
            "mean": float(np.mean(trial_means)),
            "std": float(np.std(trial_means)),
            "per_trial": trial_means,
        }
    return agg


def cmd_cv(args) -> int:
    dataset = load_csv(args.data)
    params = _forest_params(args)
    records = []
    for trial in range(args.trials):
        records.extend(
            _fold_scores(dataset, params, args.folds, trial, args.seed, _workers(args))
        )
    aggregate = {
        "command": "cv",
        "data": str(args.data),
        "n_folds": args.folds,
        "n_trials": args.trials,
        "metrics": _aggregate(records, args.trials),
    }
    _emit_lines(records + [aggregate], args.out)
    return EXIT_OK


def _parse_grid(text, cast):
    values = [cast(v) for v in str(text).split(",") if v != ""]
    if not values:
        raise ValueError("grid must be nonempty")
    return values


def cmd_gridsearch(args) -> int:
    dataset = load_csv(args.data)
    beta_grid = _parse_grid(args.beta_grid, float)
    m_grid = _parse_grid(
        args.m_grid if args.m_grid is not None else _M_GRID_PRESETS[args.preset], int
    )
    val_dataset = load_csv(args.val_data) if args.val_data else None
    if val_dataset is not None and val_dataset.dim != dataset.dim:
        raise ValueError("validation data dimension does not match training data")

    records, best = [], None
    for beta in sorted(beta_grid):
        for m in sorted(m_grid):
            params = _forest_params(args, min_samples=m, beta=beta)
            if val_dataset is None:
                fold_records = []
                for trial in range(args.trials):
                    fold_records.extend(
                        _fold_scores(dataset, params, args.folds, trial, args.seed, _workers(args))
                    )
                agg = _aggregate(fold_records, args.trials)
            else:
                trial_scores = {"micro_f1": [], "macro_f1": []}
                for trial in range(args.trials):
                    seed = int(np.random.SeedSequence([args.seed, trial]).generate_state(1)[0])
                    model = fit_forest(
                        dataset.points, dataset.labels, replace(params, seed=seed),
                        class_names=dataset.class_names, n_workers=_workers(args),
                    )
                    preds = predict_matrix(model, val_dataset.points)
                    trial_scores["micro_f1"].append(micro_f1(val_dataset.labels, preds))
                    trial_scores["macro_f1"].append(macro_f1(val_dataset.labels, preds))
                agg = {
                    k: {"mean": float(np.mean(v)), "std": float(np.std(v)), "per_trial": v}
                    for k, v in trial_scores.items()
                }
            metric_key = args.metric.replace("-", "_")
            score = agg[metric_key]["mean"]
            records.append({"beta": beta, "m": m, "score": score, "metrics": agg})
            # Strict improvement keeps the smallest (beta, m) on ties.
            if best is None or score > best["score"]:
                best = {"beta": beta, "m": m, "score": score}
    summary = {
        "command": "gridsearch",
        "data": str(args.data),
        "metric": args.metric,
        "best": best,
    }
    _emit_lines(records + [summary], args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        spec = SyntheticTreeSpec(**raw)
    except TypeError as exc:
        raise ValueError(f"invalid synthetic spec: {exc}") from None
    dataset = generate_synthetic_tree(spec)
    save_csv(dataset, args.out_csv)
    _emit(
        {
            "command": "synth",
            "out": str(args.out_csv),
            "n_points": len(dataset),
            "class_names": dataset.class_names,
            "class_counts": {
                name: int(np.count_nonzero(dataset.labels == k))
                for k, name in enumerate(dataset.class_names)
            },
        }
    )
    return EXIT_OK


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="horoforest",
        description="Random forests with horosphere splits for data in the Poincare ball.",
    )
    parser.add_argument("--config", default=None, help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = subparsers["train"] = sub.add_parser("train", help="fit a forest and save the model")
    p.add_argument("data", help="training CSV (dim_0,...,label)")
    p.add_argument("--model-out", required=True, help="path for the model JSON")
    p.add_argument("--summary-out", default=None, help="path for the summary JSON (default stdout)")
    _add_forest_args(p)
    p.set_defaults(func=cmd_train)

    p = subparsers["predict"] = sub.add_parser("predict", help="classify a dataset with a saved model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = subparsers["eval"] = sub.add_parser("eval", help="score a saved model on labeled data")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--metric", choices=["micro-f1", "macro-f1", "aupr", "all"], default="all")
    p.add_argument("--out", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = subparsers["cv"] = sub.add_parser("cv", help="stratified cross-validation")
    p.add_argument("data")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--out", default=None, help="JSONL report path (default stdout)")
    _add_forest_args(p)
    p.set_defaults(func=cmd_cv)

    p = subparsers["gridsearch"] = sub.add_parser("gridsearch", help="search the beta x m grid")
    p.add_argument("data")
    p.add_argument("--beta-grid", default=_DEFAULT_BETA_GRID, help="comma-separated beta values")
    p.add_argument("--m-grid", default=None, help="comma-separated min-samples values")
    p.add_argument("--preset", choices=["small", "large"], default="small",
                   help="m grid preset when --m-grid is not given")
    p.add_argument("--metric", choices=["micro-f1", "macro-f1"], default="micro-f1")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--val-data", default=None, help="score on this split instead of CV folds")
    p.add_argument("--out", default=None, help="JSONL report path (default stdout)")
    _add_forest_args(p)
    p.set_defaults(func=cmd_gridsearch)

    p = subparsers["synth"] = sub.add_parser("synth", help="generate a synthetic benchmark CSV")
    p.add_argument("spec", help="JSON file with SyntheticTreeSpec fields")
    p.add_argument("out_csv")
    p.set_defaults(func=cmd_synth)

    return parser, subparsers


def main(argv=None) -> int:
    parser, subparsers = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config, "r", encoding="utf-8") as fh:
                config = json.load(fh)
            if not isinstance(config, dict):
                raise ValueError("config file must hold a JSON object")
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        for p in subparsers.values():
            known_dests = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in config.items() if k in known_dests})

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # computation failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
