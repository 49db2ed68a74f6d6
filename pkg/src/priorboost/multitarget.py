"""Reduction of the multi-target task to independent single-target subtasks.

Each target column gets its own prior-anchored expansion via the inbuilt
model selection of base_boost_cv; the fitted per-target models are
concatenated into one multi-target regressor. Subtasks are seeded
independently from (master seed, target index), so they are order-independent
and safe to fit concurrently.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._util import derive_seed
from .boosting import (
    AdditiveExpansion,
    BoostParams,
    CvReport,
    base_boost_cv,
    expansion_from_dict,
    expansion_to_dict,
)
from .core import Dataset, Loss, dataset_fingerprint, mae

__all__ = [
    "MultiTargetModel",
    "EvaluationReport",
    "fit_multi",
    "predict_multi",
    "evaluate_multi",
    "save_model",
    "load_model",
]

_TARGET_TAG = 0x7A26
SCHEMA_VERSION = 1


@dataclass
class MultiTargetModel:
    models: list[AdditiveExpansion]
    reports: list[CvReport]
    feature_names: list[str]
    target_names: list[str]
    units: str | None
    training_fingerprint: str

    @property
    def n(self) -> int:
        return len(self.models)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: expected vector of length {self.n}")
        return np.array([m.predict(x) for m in self.models], dtype=np.float64)

    def predict_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n:
            raise ValueError(f"dimension mismatch: expected (m, {self.n}) matrix")
        return np.column_stack([m.predict(X) for m in self.models])


def fit_multi(
    train: Dataset,
    params: BoostParams,
    k_folds: int = 5,
    cv_loss: Loss = Loss.ABSOLUTE,
    per_target: dict[int, BoostParams] | None = None,
    jobs: int = 1,
) -> MultiTargetModel:
    """Fit one base_boost_cv subtask per target and concatenate the results.

    ``params`` is shared across targets; ``per_target`` overrides win for the
    indices they name. Each subtask's seed derives from its own params seed
    and the target index, so results do not depend on fitting order or on
    ``jobs``. Subtask failures are aggregated and reported with their target
    indices.
    """
    n = train.n

    def fit_one(j: int) -> tuple[AdditiveExpansion, CvReport]:
        base = per_target[j] if per_target and j in per_target else params
        effective = replace(base, seed=derive_seed(base.seed, _TARGET_TAG, j))
        return base_boost_cv(train.target_slice(j), effective, k_folds, cv_loss)

    results: list = [None] * n
    failures: list[tuple[int, Exception]] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {j: pool.submit(fit_one, j) for j in range(n)}
            for j, future in futures.items():
                try:
                    results[j] = future.result()
                except Exception as exc:
                    failures.append((j, exc))
    else:
        for j in range(n):
            try:
                results[j] = fit_one(j)
            except Exception as exc:
                failures.append((j, exc))
    if failures:
        details = "; ".join(f"target {j}: {exc}" for j, exc in failures)
        raise RuntimeError(
            f"single-target subtasks failed for targets "
            f"{sorted(j for j, _ in failures)}: {details}"
        )
    return MultiTargetModel(
        models=[r[0] for r in results],
        reports=[r[1] for r in results],
        feature_names=list(train.feature_names),
        target_names=list(train.target_names),
        units=train.units,
        training_fingerprint=dataset_fingerprint(train),
    )


def predict_multi(model: MultiTargetModel, x) -> np.ndarray:
    """Predict the n-vector for one example; component j comes from model j."""
    return model.predict(x)


@dataclass
class EvaluationReport:
    per_target_mae: np.ndarray
    average_mae: float
    baseline_per_target_mae: np.ndarray
    baseline_average_mae: float
    improvement_pct: float

    def to_dict(self) -> dict:
        return {
            "per_target_mae": [float(v) for v in self.per_target_mae],
            "average_mae": float(self.average_mae),
            "baseline_per_target_mae": [float(v) for v in self.baseline_per_target_mae],
            "baseline_average_mae": float(self.baseline_average_mae),
            "improvement_pct": float(self.improvement_pct),
        }


def evaluate_multi(
    model: MultiTargetModel, test: Dataset, allow_training_data: bool = False
) -> EvaluationReport:
    """Score the model and the identity-prior baseline on a held-out dataset.

    The baseline predictions are the test examples themselves (the prior
    model's own output); improvement_pct = 100 * (1 - model / baseline) on
    the averaged MAE, defined as 0 when the baseline error is 0. Evaluating
    on the exact dataset the model was fitted on is refused unless
    ``allow_training_data=True`` is passed explicitly.
    """
    if test.n != model.n:
        raise ValueError(f"dataset has {test.n} targets, model expects {model.n}")
    if not allow_training_data and dataset_fingerprint(test) == model.training_fingerprint:
        raise ValueError(
            "refusing to evaluate on the training dataset; "
            "pass allow_training_data=True for an explicit training-set evaluation"
        )
    predictions = model.predict_matrix(test.examples)
    per_target = np.array(
        [mae(test.targets[:, j], predictions[:, j]) for j in range(test.n)]
    )
    baseline = np.array(
        [mae(test.targets[:, j], test.examples[:, j]) for j in range(test.n)]
    )
    avg = float(np.mean(per_target))
    baseline_avg = float(np.mean(baseline))
    improvement = 0.0 if baseline_avg == 0.0 else 100.0 * (1.0 - avg / baseline_avg)
    return EvaluationReport(per_target, avg, baseline, baseline_avg, improvement)


# ---------------------------------------------------------------------------
# Model JSON
# ---------------------------------------------------------------------------

def model_to_dict(model: MultiTargetModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(model.feature_names),
        "target_names": list(model.target_names),
        "units": model.units,
        "training_fingerprint": model.training_fingerprint,
        "models": [expansion_to_dict(m) for m in model.models],
        "reports": [r.to_dict() for r in model.reports],
    }


def model_from_dict(payload: dict) -> MultiTargetModel:
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {payload.get('schema_version')!r}")
    return MultiTargetModel(
        models=[expansion_from_dict(m) for m in payload["models"]],
        reports=[CvReport.from_dict(r) for r in payload["reports"]],
        feature_names=list(payload["feature_names"]),
        target_names=list(payload["target_names"]),
        units=payload.get("units"),
        training_fingerprint=payload["training_fingerprint"],
    )


def save_model(model: MultiTargetModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MultiTargetModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
