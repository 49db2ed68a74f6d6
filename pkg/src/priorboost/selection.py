"""Generic k-fold cross-validation, nested CV with grid search, and
augmented learning curves.

``cross_validate`` scores any fit procedure over a FoldPlan. ``nested_cv``
adds an inner selection loop: per outer fold, every grid config is scored by
inner l-fold CV on the outer-training rows only, the best config is refit on
those rows and scored on the withheld outer fold. ``learning_curve`` tracks
training, cross-validation, and incumbent errors as the training size grows,
using the same modified CV as the boosting model selection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ._util import derive_seed, fold_assignments
from .boosting import BoostParams, base_boost, base_boost_cv
from .core import Loss, TargetSlice, loss_value

__all__ = [
    "FoldPlan",
    "make_folds",
    "CvResult",
    "cross_validate",
    "Grid",
    "GridSelection",
    "grid_select",
    "NestedCvFold",
    "NestedCvResult",
    "nested_cv",
    "LearningCurvePoint",
    "learning_curve",
]

_OUTER_TAG = 0x0073
_INNER_TAG = 0x1223
_CURVE_TAG = 0xC4E7


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of m rows to k disjoint, covering, nonempty folds."""

    k: int
    assignments: np.ndarray
    seed: int = 0

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", assignments)
        if assignments.ndim != 1 or assignments.size < self.k:
            raise ValueError("assignments must be a vector with at least k entries")
        counts = np.bincount(assignments, minlength=self.k)
        if assignments.min() < 0 or assignments.max() >= self.k:
            raise ValueError("fold ids must lie in [0, k)")
        if np.any(counts == 0):
            raise ValueError("every fold must be nonempty")

    @property
    def m(self) -> int:
        return self.assignments.shape[0]

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def make_folds(m: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle into k folds with sizes differing by at most one."""
    return FoldPlan(k=k, assignments=fold_assignments(m, k, seed), seed=seed)


def _predict_with(predictor, X) -> np.ndarray:
    out = predictor.predict(X) if hasattr(predictor, "predict") else predictor(X)
    return np.asarray(out, dtype=np.float64)


@dataclass
class CvResult:
    fold_errors: np.ndarray
    cv_error: float
    fold_indices: list[np.ndarray]
    fold_predictions: list[np.ndarray]


def cross_validate(
    slice: TargetSlice,
    fit: Callable[[TargetSlice], object],
    plan: FoldPlan,
    loss: Loss = Loss.ABSOLUTE,
) -> CvResult:
    """Fit on each fold complement and average the loss on the withheld fold.

    ``fit`` takes a training TargetSlice and returns a predictor (an object
    with ``predict`` or a plain callable on a feature matrix). Per-fold
    predictions and row indices are kept so results can be audited or
    recomputed.
    """
    if plan.m != slice.m:
        raise ValueError(f"plan covers {plan.m} rows but slice has {slice.m}")
    fold_errors = np.empty(plan.k, dtype=np.float64)
    fold_indices: list[np.ndarray] = []
    fold_predictions: list[np.ndarray] = []
    for fold in range(plan.k):
        held = plan.assignments == fold
        try:
            predictor = fit(slice.subset(~held))
        except Exception as exc:
            raise RuntimeError(f"fit failed on fold {fold}: {exc}") from exc
        preds = _predict_with(predictor, slice.examples[held])
        fold_errors[fold] = float(np.mean(loss_value(loss, slice.target[held], preds)))
        fold_indices.append(np.nonzero(held)[0])
        fold_predictions.append(preds)
    return CvResult(fold_errors, float(np.mean(fold_errors)), fold_indices, fold_predictions)


@dataclass(frozen=True)
class Grid:
    """Named hyperparameter axes; configs() is their cartesian product.

    The product size is capped (default 512); construct with a larger
    ``max_configs`` to override explicitly.
    """

    axes: Mapping[str, Sequence]
    max_configs: int = 512

    def __post_init__(self):
        if not self.axes:
            raise ValueError("grid must have at least one axis")
        size = 1
        for name, values in self.axes.items():
            values = tuple(values)
            if not values:
                raise ValueError(f"grid axis {name!r} is empty")
            size *= len(values)
        if size > self.max_configs:
            raise ValueError(
                f"grid holds {size} configs, above the cap {self.max_configs}; "
                "pass a larger max_configs to override"
            )

    def configs(self) -> list[dict]:
        names = list(self.axes.keys())
        return [
            dict(zip(names, combo))
            for combo in itertools.product(*(self.axes[name] for name in names))
        ]


@dataclass
class GridSelection:
    config_index: int
    config: dict
    inner_cv_errors: np.ndarray


def grid_select(
    slice: TargetSlice,
    grid: Grid,
    fit_factory: Callable[[dict], Callable[[TargetSlice], object]],
    inner_k: int,
    loss: Loss,
    seed: int,
) -> GridSelection:
    """Pick the grid config with the minimum inner-k CV error on this slice.

    Pure function of (slice rows, grid, seed): it never sees rows outside the
    slice, which is what keeps nested CV leak-free. Ties go to the earliest
    config in grid declaration order.
    """
    plan = make_folds(slice.m, inner_k, seed)
    configs = grid.configs()
    errors = np.empty(len(configs), dtype=np.float64)
    for idx, config in enumerate(configs):
        errors[idx] = cross_validate(slice, fit_factory(config), plan, loss).cv_error
    best = int(np.argmin(errors))
    return GridSelection(best, configs[best], errors)


@dataclass
class NestedCvFold:
    fold_index: int
    chosen_config_index: int
    chosen_config: dict
    fold_error: float
    inner_seed: int
    inner_cv_errors: np.ndarray
    train_indices: np.ndarray


@dataclass
class NestedCvResult:
    outer_error_estimate: float
    folds: list[NestedCvFold]

    def to_dict(self) -> dict:
        return {
            "outer_error_estimate": float(self.outer_error_estimate),
            "folds": [
                {
                    "fold_index": f.fold_index,
                    "chosen_config_index": f.chosen_config_index,
                    "chosen_config": dict(f.chosen_config),
                    "fold_error": float(f.fold_error),
                    "inner_seed": f.inner_seed,
                    "inner_cv_errors": [float(v) for v in f.inner_cv_errors],
                }
                for f in self.folds
            ],
        }


def nested_cv(
    slice: TargetSlice,
    grid: Grid,
    fit_factory: Callable[[dict], Callable[[TargetSlice], object]],
    outer_k: int = 5,
    inner_l: int = 3,
    loss: Loss = Loss.ABSOLUTE,
    seed: int = 0,
) -> NestedCvResult:
    """Outer-k error estimation around an inner-l grid selection loop.

    Per outer fold: select the best config by inner CV on the outer-training
    rows, refit it on those rows, and score the withheld fold. The outer
    error estimate is the mean of the fold errors. Inner selections are
    reported per fold (with their seeds) so they can be audited and replayed.
    """
    outer_plan = make_folds(slice.m, outer_k, derive_seed(seed, _OUTER_TAG))
    folds: list[NestedCvFold] = []
    errors = np.empty(outer_k, dtype=np.float64)
    for fold in range(outer_k):
        held = outer_plan.assignments == fold
        train_slice = slice.subset(~held)
        inner_seed = derive_seed(seed, _INNER_TAG, fold)
        selection = grid_select(train_slice, grid, fit_factory, inner_l, loss, inner_seed)
        predictor = fit_factory(selection.config)(train_slice)
        preds = _predict_with(predictor, slice.examples[held])
        fold_error = float(np.mean(loss_value(loss, slice.target[held], preds)))
        errors[fold] = fold_error
        folds.append(
            NestedCvFold(
                fold_index=fold,
                chosen_config_index=selection.config_index,
                chosen_config=selection.config,
                fold_error=fold_error,
                inner_seed=inner_seed,
                inner_cv_errors=selection.inner_cv_errors,
                train_indices=np.nonzero(~held)[0],
            )
        )
    return NestedCvResult(float(np.mean(errors)), folds)


@dataclass
class LearningCurvePoint:
    train_size: int
    train_error: float
    cv_error: float
    incumbent_error: float


def learning_curve(
    slice: TargetSlice,
    params: BoostParams,
    sizes: Sequence[int],
    k_folds: int = 5,
    loss: Loss = Loss.ABSOLUTE,
    repeats: int = 5,
) -> list[LearningCurvePoint]:
    """Augmented learning curve: training, CV, and incumbent errors per size.

    Per repeat, a seeded row permutation defines nested subsets (the subset
    of size s is contained in every larger one); each subset keeps original
    row order, so the full-size point reproduces base_boost_cv on the intact
    slice exactly. Errors are averaged over repeats.
    """
    sizes = [int(s) for s in sizes]
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    if sizes[-1] > slice.m:
        raise ValueError(f"size {sizes[-1]} exceeds available rows {slice.m}")
    if sizes[0] // k_folds < 2:
        raise ValueError(
            f"size {sizes[0]} too small for {k_folds} folds of at least 2 rows"
        )
    train_sum = np.zeros(len(sizes))
    cv_sum = np.zeros(len(sizes))
    incumbent_sum = np.zeros(len(sizes))
    for repeat in range(repeats):
        rng = np.random.default_rng(derive_seed(params.seed, _CURVE_TAG, repeat))
        perm = rng.permutation(slice.m)
        for si, size in enumerate(sizes):
            sub = slice.subset(np.sort(perm[:size]))
            candidate = base_boost(sub, params)
            train_sum[si] += float(
                np.mean(loss_value(loss, sub.target, candidate.predict(sub.examples)))
            )
            _, report = base_boost_cv(sub, params, k_folds, loss)
            cv_sum[si] += report.cv_error
            incumbent_sum[si] += report.incumbent_error
    return [
        LearningCurvePoint(
            train_size=size,
            train_error=float(train_sum[si] / repeats),
            cv_error=float(cv_sum[si] / repeats),
            incumbent_error=float(incumbent_sum[si] / repeats),
        )
        for si, size in enumerate(sizes)
    ]
