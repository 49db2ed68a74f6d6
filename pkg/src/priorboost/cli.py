"""Command-line harness: gen, fit, predict, eval, curve, explain, nested-cv.

Structured outputs are JSON, tabular outputs are CSV; plots are not rendered,
the emitted files are plot-ready. Every run writes a resolved-config snapshot
before any computation plus a run_meta.json holding execution details
(timestamp, jobs); primary outputs are byte-identical for a fixed
(config, seed) regardless of --jobs. Exit codes: 0 success, 1 validation
error, 2 I/O error, 3 numerical failure. PRIORBOOST_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._util import derive_seed
from .boosting import BoostParams, make_boost_fit_factory
from .core import (
    Loss,
    SplitSpec,
    average_mae,
    load_dataset_csv,
    save_dataset_csv,
    split_indices,
)
from .explain import (
    save_attributions_csv,
    save_importance_json,
    shapley_exact,
    shapley_sampled,
    subsample_background,
    summary_data,
)
from .learners import StackingParams, TreeParams, fit_linear, fit_stacking, fit_tree
from .multitarget import evaluate_multi, fit_multi, load_model, save_model
from .selection import Grid, learning_curve, nested_cv
from .simdata import (
    BiasScenario,
    ChainSampler,
    ControlModelProxy,
    Distortion,
    EigensolverError,
    generate_bias_dataset,
    generate_dataset,
    load_bias_csv,
    save_bias_csv,
)

log = logging.getLogger("priorboost")

_SPLIT_TAG = 0x5B11
_NOISE_TAG = 0x2015E
_BACKGROUND_TAG = 0xBA26
_EXPLAIN_TAG = 0xE8B1

_DEFAULT_CURVE_SIZES = list(range(23, 96, 8))

_BOOST_KEYS = {
    "n_stages": 100,
    "learning_rate": 0.1,
    "l1_penalty": 0.0,
    "loss": "absolute",
    "line_search_loss": "absolute",
    "weak_learner": "tree",
    "max_depth": 3,
    "min_samples_leaf": 2,
    "oof_folds": 5,
}

_SCHEMAS: dict[str, dict] = {
    "gen": {
        "m": 136,
        "n_sites": 5,
        "delta_range": [-50.0, 50.0],
        "coupling_range": [20.0, 40.0],
        "preset": "default",
        "offset": 2.0,
        "noise_sigma": None,
        "bias_mode": False,
        "qubit_sensitivity": None,
        "coupler_sensitivity": None,
    },
    "fit": {
        "data": None,
        "train_fraction": 0.70,
        "shuffle": True,
        "k_folds": 5,
        "cv_loss": "absolute",
        **_BOOST_KEYS,
    },
    "predict": {"data": None, "model": None},
    "eval": {"data": None, "model": None, "split": None, "allow_training": False},
    "curve": {
        "data": None,
        "target": 0,
        "sizes": None,
        "k_folds": 5,
        "repeats": 5,
        "cv_loss": "absolute",
        **_BOOST_KEYS,
    },
    "explain": {
        "mode": "model",
        "data": None,
        "model": None,
        "bias_data": None,
        "target": 0,
        "method": "exact",
        "n_permutations": 2000,
        "background_rows": 64,
        "max_rows": 20,
        "max_features": 15,
        "regressor": "stacking",
    },
    "nested-cv": {
        "data": None,
        "target": 0,
        "grid": None,
        "outer_k": 5,
        "inner_l": 3,
        "cv_loss": "absolute",
        "grid_cap": 512,
        **_BOOST_KEYS,
    },
}


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _boost_params(cfg: dict, seed: int) -> BoostParams:
    if cfg["weak_learner"] == "tree":
        weak = TreeParams(
            max_depth=int(cfg["max_depth"]),
            min_samples_leaf=int(cfg["min_samples_leaf"]),
        )
    elif cfg["weak_learner"] == "stacking":
        weak = StackingParams(
            base_learners=(
                "linear",
                TreeParams(
                    max_depth=int(cfg["max_depth"]),
                    min_samples_leaf=int(cfg["min_samples_leaf"]),
                ),
            ),
            oof_folds=int(cfg["oof_folds"]),
        )
    else:
        raise ValueError(f"weak_learner must be 'tree' or 'stacking', got {cfg['weak_learner']!r}")
    return BoostParams(
        n_stages=int(cfg["n_stages"]),
        loss=Loss(cfg["loss"]),
        line_search_loss=Loss(cfg["line_search_loss"]),
        l1_penalty=float(cfg["l1_penalty"]),
        learning_rate=float(cfg["learning_rate"]),
        weak_learner=weak,
        seed=seed,
    )


def _require(cfg: dict, key: str) -> str:
    if not cfg.get(key):
        raise ValueError(f"missing required config key {key!r}")
    return cfg[key]


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def _cmd_gen(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    preset = cfg["preset"]
    if preset == "identity":
        proxy = ControlModelProxy(seed=derive_seed(seed, _NOISE_TAG))
    elif preset == "default":
        proxy = ControlModelProxy.default_scenario(seed=derive_seed(seed, _NOISE_TAG))
    elif preset == "offset":
        proxy = ControlModelProxy.offset_scenario(
            offset=float(cfg["offset"]), seed=derive_seed(seed, _NOISE_TAG)
        )
    else:
        raise ValueError(f"preset must be identity, default, or offset, got {preset!r}")
    if cfg["noise_sigma"] is not None:
        proxy = ControlModelProxy(
            delta=proxy.delta,
            coupling=proxy.coupling,
            noise_sigma=float(cfg["noise_sigma"]),
            seed=proxy.seed,
        )

    m = int(cfg["m"])
    if cfg["bias_mode"]:
        scenario = BiasScenario(
            n_qubit_biases=int(cfg["n_sites"]),
            n_coupler_biases=int(cfg["n_sites"]) - 1,
            qubit_sensitivity=(
                tuple(cfg["qubit_sensitivity"]) if cfg["qubit_sensitivity"] else None
            ),
            coupler_sensitivity=(
                tuple(cfg["coupler_sensitivity"]) if cfg["coupler_sensitivity"] else None
            ),
        )
        bias_data = generate_bias_dataset(m, scenario, proxy, seed=seed)
        dataset = bias_data.dataset
        save_bias_csv(bias_data, out / "bias.csv")
    else:
        sampler = ChainSampler(
            n_sites=int(cfg["n_sites"]),
            delta_range=tuple(cfg["delta_range"]),
            coupling_range=tuple(cfg["coupling_range"]),
        )
        dataset = generate_dataset(m, sampler, proxy, seed=seed)
    save_dataset_csv(dataset, out / "dataset.csv")
    baseline = average_mae(dataset.targets, dataset.examples)
    _write_json(
        out / "gen_summary.json",
        {"m": dataset.m, "n": dataset.n, "baseline_average_mae": baseline},
    )
    print(f"wrote {dataset.m} examples; baseline average MAE = {baseline:.6f}")


def _cmd_fit(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    dataset = load_dataset_csv(_require(cfg, "data"))
    spec = SplitSpec(
        train_fraction=float(cfg["train_fraction"]),
        seed=derive_seed(seed, _SPLIT_TAG),
        shuffle=bool(cfg["shuffle"]),
    )
    train_rows, test_rows = split_indices(dataset.m, spec)
    train = dataset.subset(train_rows)
    _write_json(
        out / "split.json",
        {
            "train_indices": [int(i) for i in train_rows],
            "test_indices": [int(i) for i in test_rows],
            "train_fraction": spec.train_fraction,
            "shuffle": spec.shuffle,
            "split_seed": spec.seed,
        },
    )
    params = _boost_params(cfg, seed)
    model = fit_multi(
        train, params, k_folds=int(cfg["k_folds"]), cv_loss=Loss(cfg["cv_loss"]), jobs=jobs
    )
    save_model(model, out / "model.json")
    for j, report in enumerate(model.reports):
        choice = "incumbent" if report.chose_incumbent else "candidate"
        print(
            f"target {j} ({model.target_names[j]}): chose {choice} "
            f"(cv={report.cv_error:.6f}, incumbent={report.incumbent_error:.6f})"
        )
    print(f"wrote model for {model.n} targets trained on {train.m} rows")


def _cmd_predict(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    dataset = load_dataset_csv(_require(cfg, "data"))
    model = load_model(_require(cfg, "model"))
    preds = model.predict_matrix(dataset.examples)
    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(model.target_names)
        for row in preds:
            writer.writerow([repr(float(v)) for v in row])
    print(f"wrote predictions for {preds.shape[0]} examples")


def _cmd_eval(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    dataset = load_dataset_csv(_require(cfg, "data"))
    model = load_model(_require(cfg, "model"))
    if cfg["split"]:
        with open(cfg["split"], "r", encoding="utf-8") as fh:
            split_info = json.load(fh)
        dataset = dataset.subset(np.array(split_info["test_indices"], dtype=np.int64))
    report = evaluate_multi(model, dataset, allow_training_data=bool(cfg["allow_training"]))
    _write_json(out / "metrics.json", report.to_dict())
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "model_mae", "baseline_mae", "improvement_pct"])
        for j, name in enumerate(model.target_names):
            model_mae = float(report.per_target_mae[j])
            base_mae = float(report.baseline_per_target_mae[j])
            pct = 0.0 if base_mae == 0.0 else 100.0 * (1.0 - model_mae / base_mae)
            writer.writerow([name, repr(model_mae), repr(base_mae), repr(pct)])
        writer.writerow(
            [
                "average",
                repr(report.average_mae),
                repr(report.baseline_average_mae),
                repr(report.improvement_pct),
            ]
        )
    print(
        f"average MAE {report.average_mae:.6f} vs baseline "
        f"{report.baseline_average_mae:.6f} ({report.improvement_pct:.2f}% improvement)"
    )


def _cmd_curve(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    dataset = load_dataset_csv(_require(cfg, "data"))
    target = int(cfg["target"])
    slice_ = dataset.target_slice(target)
    if cfg["sizes"] is None:
        sizes = [s for s in _DEFAULT_CURVE_SIZES if s <= slice_.m]
        if not sizes:
            raise ValueError(
                f"dataset has only {slice_.m} rows; too small for the default "
                f"size range, pass sizes explicitly"
            )
    else:
        sizes = [int(s) for s in cfg["sizes"]]
    params = _boost_params(cfg, seed)
    points = learning_curve(
        slice_,
        params,
        sizes,
        k_folds=int(cfg["k_folds"]),
        loss=Loss(cfg["cv_loss"]),
        repeats=int(cfg["repeats"]),
    )
    payload = [
        {
            "train_size": p.train_size,
            "train_error": p.train_error,
            "cv_error": p.cv_error,
            "incumbent_error": p.incumbent_error,
        }
        for p in points
    ]
    _write_json(out / "curve.json", {"target": target, "points": payload})
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_size", "train_error", "cv_error", "incumbent_error"])
        for p in points:
            writer.writerow(
                [p.train_size, repr(p.train_error), repr(p.cv_error), repr(p.incumbent_error)]
            )
    print(f"wrote learning curve with {len(points)} points for target {target}")


def _fit_bias_regressor(kind: str, biases: np.ndarray, y: np.ndarray, seed: int):
    if kind == "stacking":
        return fit_stacking(biases, y, StackingParams(), seed=seed)
    if kind == "tree":
        return fit_tree(biases, y, TreeParams(max_depth=4))
    if kind == "linear":
        return fit_linear(biases, y)
    raise ValueError(f"regressor must be stacking, tree, or linear, got {kind!r}")


def _cmd_explain(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    mode = cfg["mode"]
    target = int(cfg["target"])
    dataset = load_dataset_csv(_require(cfg, "data"))
    if mode == "model":
        model = load_model(_require(cfg, "model"))
        predictor = model.models[target]
        features = dataset.examples
        names = list(dataset.feature_names)
    elif mode == "bias":
        biases, names = load_bias_csv(_require(cfg, "bias_data"))
        if biases.shape[0] != dataset.m:
            raise ValueError("bias CSV and dataset CSV row counts differ")
        predictor = _fit_bias_regressor(
            cfg["regressor"], biases, dataset.targets[:, target], derive_seed(seed, _EXPLAIN_TAG)
        )
        features = biases
    else:
        raise ValueError(f"mode must be 'model' or 'bias', got {mode!r}")

    background = subsample_background(
        features, int(cfg["background_rows"]), seed=derive_seed(seed, _BACKGROUND_TAG)
    )
    max_rows = cfg["max_rows"]
    n_rows = features.shape[0] if max_rows is None else min(int(max_rows), features.shape[0])
    attributions = []
    for i in range(n_rows):
        if cfg["method"] == "exact":
            att = shapley_exact(
                predictor,
                features[i],
                background,
                max_M=int(cfg["max_features"]),
                feature_names=names,
                example_id=i,
            )
        elif cfg["method"] == "sampled":
            att = shapley_sampled(
                predictor,
                features[i],
                background,
                n_permutations=int(cfg["n_permutations"]),
                seed=derive_seed(seed, _EXPLAIN_TAG, i),
                feature_names=names,
                example_id=i,
            )
        else:
            raise ValueError(f"method must be 'exact' or 'sampled', got {cfg['method']!r}")
        attributions.append(att)
    summary = summary_data(attributions, feature_names=names)
    save_attributions_csv(summary, out / "attributions.csv")
    save_importance_json(summary, out / "importance.json")
    top = summary.feature_names[int(summary.report.order[-1])]
    print(
        f"explained {n_rows} examples for target {target}; most important feature: {top}"
    )


def _cmd_nested_cv(cfg: dict, seed: int, jobs: int, out: Path) -> None:
    dataset = load_dataset_csv(_require(cfg, "data"))
    target = int(cfg["target"])
    grid_axes = cfg["grid"]
    if not isinstance(grid_axes, dict) or not grid_axes:
        raise ValueError("grid must be a non-empty object of axis lists")
    grid = Grid(axes=grid_axes, max_configs=int(cfg["grid_cap"]))
    base = _boost_params(cfg, seed)
    result = nested_cv(
        dataset.target_slice(target),
        grid,
        make_boost_fit_factory(base),
        outer_k=int(cfg["outer_k"]),
        inner_l=int(cfg["inner_l"]),
        loss=Loss(cfg["cv_loss"]),
        seed=seed,
    )
    _write_json(out / "nested_cv.json", {"target": target, **result.to_dict()})
    print(
        f"outer error estimate {result.outer_error_estimate:.6f} over "
        f"{len(result.folds)} outer folds"
    )


_HANDLERS = {
    "gen": _cmd_gen,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "curve": _cmd_curve,
    "explain": _cmd_explain,
    "nested-cv": _cmd_nested_cv,
}


# ---------------------------------------------------------------------------
# Argument parsing and config resolution
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")
    parser.add_argument("--out", type=str, default="out", help="output directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priorboost",
        description="Multi-target boosting on prior predictions: data generation, "
        "fitting with inbuilt model selection, evaluation, learning curves, "
        "Shapley explanations, and nested cross-validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--preset", choices=["identity", "default", "offset"], default=None)
    p.add_argument("--offset", type=float, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--bias-mode", dest="bias_mode", action="store_true", default=None)

    p = sub.add_parser("fit", help="split, fit, and serialize a multi-target model")
    _add_common(p)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--k-folds", dest="k_folds", type=int, default=None)
    p.add_argument("--n-stages", dest="n_stages", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--l1-penalty", dest="l1_penalty", type=float, default=None)
    p.add_argument("--weak-learner", dest="weak_learner", choices=["tree", "stacking"], default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)

    p = sub.add_parser("predict", help="predict all rows of a dataset")
    _add_common(p)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--model", type=str, default=None)

    p = sub.add_parser("eval", help="score a model against the prior baseline")
    _add_common(p)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--model", type=str, default=None)
    p.add_argument("--split", type=str, default=None, help="split.json from fit")
    p.add_argument("--allow-training", dest="allow_training", action="store_true", default=None)

    p = sub.add_parser("curve", help="augmented learning curve for one target")
    _add_common(p)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--sizes", type=str, default=None, help="comma-separated sizes")
    p.add_argument("--k-folds", dest="k_folds", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--n-stages", dest="n_stages", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)

    p = sub.add_parser("explain", help="Shapley attributions for one target")
    _add_common(p)
    p.add_argument("--mode", choices=["model", "bias"], default=None)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--model", type=str, default=None)
    p.add_argument("--bias-data", dest="bias_data", type=str, default=None)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--method", choices=["exact", "sampled"], default=None)
    p.add_argument("--permutations", dest="n_permutations", type=int, default=None)
    p.add_argument("--background-rows", dest="background_rows", type=int, default=None)
    p.add_argument("--max-rows", dest="max_rows", type=int, default=None)
    p.add_argument("--regressor", choices=["stacking", "tree", "linear"], default=None)

    p = sub.add_parser("nested-cv", help="nested CV with an inner grid search")
    _add_common(p)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--grid", type=str, default=None, help="JSON object of axis lists")
    p.add_argument("--outer-k", dest="outer_k", type=int, default=None)
    p.add_argument("--inner-l", dest="inner_l", type=int, default=None)

    return parser


def _resolve_config(args: argparse.Namespace) -> tuple[dict, int]:
    schema = _SCHEMAS[args.command]
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, v in schema.items()}
    seed = 0
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in file_cfg.items():
            if key == "seed":
                seed = int(value)
                continue
            if key not in schema:
                raise ValueError(f"unknown config key {key!r} for command {args.command}")
            cfg[key] = value
    for key in schema:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            cfg[key] = flag_value
    if args.command == "curve" and isinstance(cfg.get("sizes"), str):
        cfg["sizes"] = [int(s) for s in cfg["sizes"].split(",") if s.strip()]
    if args.command == "nested-cv" and isinstance(cfg.get("grid"), str):
        cfg["grid"] = json.loads(cfg["grid"])
    if args.seed is not None:
        seed = args.seed
    return cfg, seed


def _setup_logging() -> None:
    level_name = os.environ.get("PRIORBOOST_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _error_exit_code(exc: BaseException) -> int:
    if isinstance(exc, (EigensolverError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError)):
        return 3
    if isinstance(exc, RuntimeError):
        return 3
    if isinstance(exc, OSError):
        return 2
    return 1


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, seed = _resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        snapshot = {"command": args.command, "seed": seed}
        snapshot.update(cfg)
        _write_json(out / "resolved_config.json", snapshot)
        _write_json(
            out / "run_meta.json",
            {
                "command": args.command,
                "timestamp_utc": datetime.now(timezone.utc).isoformat(),
                "jobs": args.jobs,
                "out": str(out),
                "log_level": os.environ.get("PRIORBOOST_LOG", "WARNING"),
            },
        )
        _HANDLERS[args.command](cfg, seed, max(1, args.jobs), out)
        return 0
    except Exception as exc:  # structured failure contract
        code = _error_exit_code(exc)
        log.debug("command failed", exc_info=exc)
        print(
            json.dumps(
                {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
            ),
            file=sys.stderr,
        )
        return code


if __name__ == "__main__":
    raise SystemExit(main())
