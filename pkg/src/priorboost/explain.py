"""Model-agnostic Shapley feature attribution by exact subset enumeration.

The value of a feature subset S is the interventional marginalization over a
finite background set: background rows with the S-columns overwritten by the
explained example. ``shapley_exact`` enumerates all 2^M subsets and combines
value differences with exact Shapley weights, which is feasible (and
preferable to approximations) up to M ~ 15 features. ``shapley_sampled`` is
the scalable fallback: an unbiased permutation-sampling estimator of the
same attributions with per-feature standard errors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Attribution",
    "ImportanceReport",
    "SummaryData",
    "shapley_exact",
    "shapley_sampled",
    "summary_data",
    "save_attributions_csv",
    "save_importance_json",
]

DEFAULT_MAX_FEATURES = 15
DEFAULT_BACKGROUND_ROWS = 64


@dataclass
class Attribution:
    """Per-example attribution: base value plus one share per feature.

    base_value is the mean model output over the background set; the shares
    sum with it to the model's prediction on the example (local accuracy).
    """

    base_value: float
    phis: np.ndarray
    x: np.ndarray
    feature_names: list[str] | None = None
    example_id: int | None = None
    std_errors: np.ndarray | None = None
    adjusted: bool = False
    method: str = "exact"

    @property
    def prediction(self) -> float:
        return float(self.base_value + np.sum(self.phis))


def _as_predict_fn(model):
    if callable(model) and not hasattr(model, "predict"):
        fn = model
    else:
        fn = model.predict

    def predict(X: np.ndarray) -> np.ndarray:
        out = np.asarray(fn(X), dtype=np.float64)
        return out.reshape(-1)

    return predict


def _check_inputs(x, background):
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single feature vector")
    if background.ndim != 2 or background.shape[0] < 1:
        raise ValueError("background must be a nonempty matrix")
    if background.shape[1] != x.shape[0]:
        raise ValueError(
            f"background has {background.shape[1]} columns, x has {x.shape[0]}"
        )
    return x, background


def subsample_background(X, max_rows: int = DEFAULT_BACKGROUND_ROWS, seed: int = 0) -> np.ndarray:
    """Seeded background subsample used to keep enumeration cost bounded."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] <= max_rows:
        return X
    rows = np.random.default_rng(seed).choice(X.shape[0], size=max_rows, replace=False)
    return X[np.sort(rows)]


def shapley_exact(
    model,
    x,
    background,
    max_M: int = DEFAULT_MAX_FEATURES,
    feature_names: Sequence[str] | None = None,
    example_id: int | None = None,
    _mask_batch: int = 2048,
) -> Attribution:
    """Exact Shapley attribution over all 2^M feature subsets.

    v(S) averages the model over the background rows with the S-features
    replaced by x; phi_k sums the weighted value differences v(S + k) - v(S)
    with weights |S|! (M - |S| - 1)! / M!. Local accuracy holds to float
    summation accuracy and is verified before returning.
    """
    x, background = _check_inputs(x, background)
    M = x.shape[0]
    if M > max_M:
        raise ValueError(
            f"{M} features exceed the exact-enumeration limit {max_M} "
            f"(2^M evaluations); use shapley_sampled instead"
        )
    predict = _as_predict_fn(model)
    nb = background.shape[0]
    n_masks = 1 << M
    bits = np.zeros((n_masks, M), dtype=bool)
    for k in range(M):
        bits[:, k] = (np.arange(n_masks) >> k) & 1

    values = np.empty(n_masks, dtype=np.float64)
    for start in range(0, n_masks, _mask_batch):
        stop = min(start + _mask_batch, n_masks)
        block = np.where(bits[start:stop, None, :], x[None, None, :], background[None, :, :])
        preds = predict(block.reshape(-1, M))
        values[start:stop] = preds.reshape(stop - start, nb).mean(axis=1)

    sizes = bits.sum(axis=1)
    fact = [math.factorial(i) for i in range(M + 1)]
    weights = np.array(
        [fact[s] * fact[M - s - 1] / fact[M] for s in range(M)], dtype=np.float64
    )
    masks = np.arange(n_masks)
    phis = np.empty(M, dtype=np.float64)
    for k in range(M):
        without = masks[~bits[:, k]]
        phis[k] = float(
            np.sum(weights[sizes[without]] * (values[without | (1 << k)] - values[without]))
        )

    base_value = float(values[0])
    full_value = float(values[-1])  # every feature replaced by x: the model at x
    gap = abs(base_value + phis.sum() - full_value)
    if gap > 1e-8 * max(1.0, abs(full_value)):
        raise FloatingPointError(f"local accuracy violated by {gap:.3e}")
    return Attribution(
        base_value=base_value,
        phis=phis,
        x=x,
        feature_names=list(feature_names) if feature_names is not None else None,
        example_id=example_id,
        method="exact",
    )


def shapley_sampled(
    model,
    x,
    background,
    n_permutations: int = 2000,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    example_id: int | None = None,
) -> Attribution:
    """Permutation-sampling Shapley estimate with standard errors.

    Each sampled feature ordering contributes one marginal value difference
    per feature; their averages are unbiased for the exact attributions. Any
    residual against local accuracy is redistributed proportionally to |phi|
    and flagged via ``adjusted`` when it is material.
    """
    x, background = _check_inputs(x, background)
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    M = x.shape[0]
    predict = _as_predict_fn(model)
    nb = background.shape[0]
    rng = np.random.default_rng(seed)
    base_value = float(np.mean(predict(background)))

    sums = np.zeros(M)
    sq_sums = np.zeros(M)
    for _ in range(n_permutations):
        order = rng.permutation(M)
        # composite rows for every prefix of the ordering, evaluated in one call
        block = np.empty((M, nb, M), dtype=np.float64)
        comp = background.copy()
        for step, k in enumerate(order):
            comp[:, k] = x[k]
            block[step] = comp
        prefix_values = predict(block.reshape(-1, M)).reshape(M, nb).mean(axis=1)
        previous = base_value
        for step, k in enumerate(order):
            marginal = prefix_values[step] - previous
            sums[k] += marginal
            sq_sums[k] += marginal * marginal
            previous = prefix_values[step]

    phis = sums / n_permutations
    if n_permutations > 1:
        variance = np.maximum(sq_sums / n_permutations - phis * phis, 0.0)
        std_errors = np.sqrt(variance / (n_permutations - 1))
    else:
        std_errors = np.full(M, np.nan)

    fx = float(predict(x[None, :])[0])
    residual = fx - (base_value + float(phis.sum()))
    adjusted = False
    if residual != 0.0:
        weights_abs = np.abs(phis)
        total = float(weights_abs.sum())
        if total > 0.0:
            phis = phis + residual * weights_abs / total
        else:
            phis = phis + residual / M
        adjusted = abs(residual) > 1e-9 * max(1.0, abs(fx))
    return Attribution(
        base_value=base_value,
        phis=phis,
        x=x,
        feature_names=list(feature_names) if feature_names is not None else None,
        example_id=example_id,
        std_errors=std_errors,
        adjusted=adjusted,
        method="sampled",
    )


@dataclass
class ImportanceReport:
    """Per-feature importances (summed |phi| over the explained set) and the
    feature order sorted by ascending importance."""

    importances: np.ndarray
    order: np.ndarray

    def to_dict(self, feature_names: Sequence[str] | None = None) -> dict:
        names = (
            list(feature_names)
            if feature_names is not None
            else [f"F{k + 1}" for k in range(len(self.importances))]
        )
        return {
            "importances": {names[k]: float(v) for k, v in enumerate(self.importances)},
            "order_ascending": [names[k] for k in self.order],
        }


@dataclass
class SummaryData:
    report: ImportanceReport
    records: list[dict]
    feature_names: list[str]


def summary_data(
    attributions: Sequence[Attribution],
    feature_names: Sequence[str] | None = None,
) -> SummaryData:
    """Importance ordering plus long-form records for summary plotting.

    All attributions must share the feature count (and names, when present).
    Records carry (example_id, feature, shap_value, feature_value) and are
    grouped by feature in ascending-importance order, ready for plotting.
    """
    if not attributions:
        raise ValueError("need at least one attribution")
    M = attributions[0].phis.shape[0]
    names = list(feature_names) if feature_names is not None else None
    for att in attributions:
        if att.phis.shape[0] != M:
            raise ValueError("attributions mix different feature counts")
        if att.feature_names is not None:
            if names is None:
                names = list(att.feature_names)
            elif list(att.feature_names) != names:
                raise ValueError("attributions mix different feature names")
    if names is None:
        names = [f"F{k + 1}" for k in range(M)]
    if len(names) != M:
        raise ValueError(f"expected {M} feature names, got {len(names)}")

    importances = np.zeros(M)
    for att in attributions:
        importances += np.abs(att.phis)
    order = np.argsort(importances, kind="stable")
    report = ImportanceReport(importances=importances, order=order)

    records: list[dict] = []
    for k in order:
        for i, att in enumerate(attributions):
            records.append(
                {
                    "example_id": att.example_id if att.example_id is not None else i,
                    "feature": names[k],
                    "shap_value": float(att.phis[k]),
                    "feature_value": float(att.x[k]),
                }
            )
    return SummaryData(report=report, records=records, feature_names=names)


def save_attributions_csv(summary: SummaryData, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "feature", "shap_value", "feature_value"])
        for rec in summary.records:
            writer.writerow(
                [
                    rec["example_id"],
                    rec["feature"],
                    repr(rec["shap_value"]),
                    repr(rec["feature_value"]),
                ]
            )


def save_importance_json(summary: SummaryData, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.report.to_dict(summary.feature_names), fh, indent=2, sort_keys=True)
        fh.write("\n")
