"""Greedy stagewise boosting initialized on an example-dependent prior.

The fitted model for target j is an additive expansion whose first term is
the j-th feature itself (the prior model's own prediction of that target)
rather than a fitted constant:

    prediction(x) = x[j] + sum_k coefficient_k * basis_k(x)

``base_boost`` grows the expansion one basis function at a time: compute
pseudo-residuals under the primary loss, fit a weak learner to them, pick
the stage coefficient by an exact one-dimensional line search under the
line-search loss (optionally L1-penalized), scale by the learning rate, and
append. Earlier stages are never revisited.

``base_boost_cv`` wraps that candidate in inbuilt model selection: a
modified k-fold cross-validation scores both the candidate and the incumbent
prior (which always predicts the j-th feature) on withheld folds, and the
prior is returned whenever it does at least as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._util import derive_seed, fold_assignments
from .core import Loss, TargetSlice, loss_value, negative_gradient
from .learners import (
    StackingParams,
    TreeParams,
    fit_stacking,
    fit_tree,
    learner_from_dict,
    learner_to_dict,
    weak_learner_params_from_dict,
    weak_learner_params_to_dict,
)

__all__ = [
    "BoostParams",
    "Stage",
    "AdditiveExpansion",
    "CvReport",
    "line_search",
    "base_boost",
    "base_boost_cv",
    "predict_expansion",
    "apply_boost_config",
    "make_boost_fit_factory",
    "expansion_to_dict",
    "expansion_from_dict",
]

_RESIDUAL_EPS = 1e-12
_STAGE_TAG = 0x57A6
_FOLD_TAG = 0xF01D
_FOLD_FIT_TAG = 0xF17F

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BoostParams:
    n_stages: int = 100
    loss: Loss = Loss.ABSOLUTE
    line_search_loss: Loss = Loss.ABSOLUTE
    l1_penalty: float = 0.0
    learning_rate: float = 0.1
    weak_learner: TreeParams | StackingParams = TreeParams()
    seed: int = 0

    def __post_init__(self):
        if self.n_stages < 1:
            raise ValueError(f"n_stages must be >= 1, got {self.n_stages}")
        if self.l1_penalty < 0:
            raise ValueError(f"l1_penalty must be >= 0, got {self.l1_penalty}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not isinstance(self.weak_learner, (TreeParams, StackingParams)):
            raise ValueError("weak_learner must be TreeParams or StackingParams")


@dataclass(frozen=True)
class Stage:
    coefficient: float
    learner: object


@dataclass
class AdditiveExpansion:
    """Prior-anchored additive model for one target.

    With zero stages this is exactly the identity prior: it predicts the
    target_index-th feature. Stages are appended once and never adjusted.
    """

    target_index: int
    n_features: int
    stages: list[Stage] = field(default_factory=list)
    params: BoostParams | None = None
    early_stopped_at: int | None = None

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, "
                f"got shape {X.shape}"
            )
        out = X[:, self.target_index].copy()
        for stage in self.stages:
            out += stage.coefficient * stage.learner.predict(X)
        return float(out[0]) if single else out

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def is_identity_prior(self) -> bool:
        return not self.stages


def predict_expansion(model: AdditiveExpansion, x) -> float:
    """Evaluate the expansion on one example; the zero-stage model returns x[j]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict_expansion expects a single feature vector")
    return model.predict(x)


def line_search(h_prev, b_vals, y, loss: Loss, l1_penalty: float = 0.0) -> float:
    """Exact minimizer of sum_i loss(y_i, h_i + a*b_i) + l1_penalty*|a|.

    Squared loss has the closed soft-thresholding form. Absolute loss gives a
    piecewise-linear convex objective whose minimum lies on a breakpoint
    (y_i - h_i) / b_i or at 0; all candidates are evaluated and ties resolve
    to the smallest |a|. Returns 0 when b is identically zero.
    """
    h_prev = np.asarray(h_prev, dtype=np.float64)
    b_vals = np.asarray(b_vals, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (h_prev.shape == b_vals.shape == y.shape) or h_prev.ndim != 1:
        raise ValueError("line_search needs three equal-length vectors")
    if not (
        np.all(np.isfinite(h_prev)) and np.all(np.isfinite(b_vals)) and np.all(np.isfinite(y))
    ):
        raise ValueError("line_search inputs must be finite")
    if l1_penalty < 0:
        raise ValueError("l1_penalty must be >= 0")
    residual = y - h_prev
    if not np.any(b_vals != 0.0):
        return 0.0

    if loss is Loss.SQUARED:
        a2 = float(np.sum(b_vals * b_vals))
        c = float(np.sum(b_vals * residual))
        # minimize a2*a^2 - 2*c*a + l1*|a|: soft-threshold c at l1/2
        shrunk = max(abs(c) - 0.5 * l1_penalty, 0.0)
        return float(np.copysign(shrunk, c) / a2)

    nonzero = b_vals != 0.0
    candidates = np.concatenate([residual[nonzero] / b_vals[nonzero], [0.0]])
    objective = (
        np.sum(np.abs(residual[None, :] - candidates[:, None] * b_vals[None, :]), axis=1)
        + l1_penalty * np.abs(candidates)
    )
    order = np.lexsort((candidates, np.abs(candidates), objective))
    return float(candidates[order[0]])


def _min_rows(params: BoostParams) -> int:
    if isinstance(params.weak_learner, TreeParams):
        return max(4, 2 * params.weak_learner.min_samples_leaf)
    return max(4, params.weak_learner.oof_folds)


def _fit_weak(weak_params, X, residuals, seed: int):
    if isinstance(weak_params, TreeParams):
        return fit_tree(X, residuals, weak_params)
    return fit_stacking(X, residuals, weak_params, seed=seed)


def base_boost(
    slice: TargetSlice,
    params: BoostParams,
    initial: AdditiveExpansion | None = None,
) -> AdditiveExpansion:
    """Fit the prior-anchored expansion by greedy stagewise boosting.

    Per stage: pseudo-residuals from the primary loss at the current
    predictions, a weak learner fit on them, then the exact line-search
    coefficient (L1-penalized if configured) scaled by the learning rate.
    Stops early when all residuals vanish (the model is already exact at the
    training rows); the stage index is recorded in ``early_stopped_at``.

    Passing ``initial`` resumes a previously fitted expansion: the remaining
    stages are identical to what a single uninterrupted run would produce,
    because per-stage seeds derive from the absolute stage index.
    """
    X = slice.examples
    y = slice.target
    if slice.m < _min_rows(params):
        raise ValueError(f"need at least {_min_rows(params)} training rows, got {slice.m}")

    stages: list[Stage] = []
    predictions = slice.prior.copy()
    if initial is not None:
        if initial.target_index != slice.target_index:
            raise ValueError("resume model targets a different index")
        if initial.n_features != slice.n:
            raise ValueError("resume model feature count differs")
        if initial.n_stages > params.n_stages:
            raise ValueError("resume model already has more stages than requested")
        stages = list(initial.stages)
        predictions = initial.predict(X)

    early_stopped_at = initial.early_stopped_at if initial is not None else None
    for k in range(len(stages), params.n_stages):
        residuals = negative_gradient(params.loss, y, predictions)
        if np.max(np.abs(residuals)) < _RESIDUAL_EPS:
            early_stopped_at = k
            break
        try:
            learner = _fit_weak(
                params.weak_learner, X, residuals, derive_seed(params.seed, _STAGE_TAG, k)
            )
        except Exception as exc:
            raise RuntimeError(f"weak learner failed at stage {k}: {exc}") from exc
        basis_values = learner.predict(X)
        coefficient = params.learning_rate * line_search(
            predictions, basis_values, y, params.line_search_loss, params.l1_penalty
        )
        stages.append(Stage(coefficient, learner))
        predictions = predictions + coefficient * basis_values

    return AdditiveExpansion(
        target_index=slice.target_index,
        n_features=slice.n,
        stages=stages,
        params=params,
        early_stopped_at=early_stopped_at,
    )


@dataclass
class CvReport:
    """Fold-level record of the incumbent-vs-candidate comparison."""

    fold_errors_candidate: np.ndarray
    fold_errors_incumbent: np.ndarray
    cv_error: float
    incumbent_error: float
    chose_incumbent: bool

    def to_dict(self) -> dict:
        return {
            "fold_errors_candidate": [float(v) for v in self.fold_errors_candidate],
            "fold_errors_incumbent": [float(v) for v in self.fold_errors_incumbent],
            "cv_error": float(self.cv_error),
            "incumbent_error": float(self.incumbent_error),
            "chose_incumbent": bool(self.chose_incumbent),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CvReport":
        return cls(
            fold_errors_candidate=np.array(payload["fold_errors_candidate"], dtype=np.float64),
            fold_errors_incumbent=np.array(payload["fold_errors_incumbent"], dtype=np.float64),
            cv_error=float(payload["cv_error"]),
            incumbent_error=float(payload["incumbent_error"]),
            chose_incumbent=bool(payload["chose_incumbent"]),
        )


def base_boost_cv(
    slice: TargetSlice,
    params: BoostParams,
    k_folds: int = 5,
    cv_loss: Loss = Loss.ABSOLUTE,
) -> tuple[AdditiveExpansion, CvReport]:
    """Boosting with inbuilt incumbent-vs-candidate model selection.

    Modified k-fold cross-validation: per fold, the candidate is boosted on
    the other k-1 folds and scored on the withheld fold, and the incumbent
    prior (which predicts the j-th feature for every withheld example) is
    scored alongside it. If the incumbent's averaged error is less than or
    equal to the candidate's, the identity-prior model (a zero-stage
    expansion) is returned; otherwise the candidate is refit on all rows.
    The report is returned in both cases. Folds are contiguous blocks of a
    seeded shuffle.
    """
    m = slice.m
    if not 2 <= k_folds <= m:
        raise ValueError(f"k_folds must be in [2, m], got k_folds={k_folds}, m={m}")
    if m // k_folds < 2:
        raise ValueError(f"too few rows per fold: m={m}, k_folds={k_folds}")
    assignments = fold_assignments(m, k_folds, derive_seed(params.seed, _FOLD_TAG))
    fold_candidate = np.empty(k_folds, dtype=np.float64)
    fold_incumbent = np.empty(k_folds, dtype=np.float64)
    for fold in range(k_folds):
        held = assignments == fold
        fold_params = replace(params, seed=derive_seed(params.seed, _FOLD_FIT_TAG, fold))
        candidate = base_boost(slice.subset(~held), fold_params)
        X_held = slice.examples[held]
        y_held = slice.target[held]
        fold_candidate[fold] = float(np.mean(loss_value(cv_loss, y_held, candidate.predict(X_held))))
        fold_incumbent[fold] = float(
            np.mean(loss_value(cv_loss, y_held, X_held[:, slice.target_index]))
        )
    cv_error = float(np.mean(fold_candidate))
    incumbent_error = float(np.mean(fold_incumbent))
    chose_incumbent = incumbent_error <= cv_error
    report = CvReport(fold_candidate, fold_incumbent, cv_error, incumbent_error, chose_incumbent)
    if chose_incumbent:
        model = AdditiveExpansion(slice.target_index, slice.n, [], params)
    else:
        model = base_boost(slice, params)
    return model, report


# ---------------------------------------------------------------------------
# Hyperparameter plumbing for grid search
# ---------------------------------------------------------------------------

_BOOST_KEYS = {"n_stages", "learning_rate", "l1_penalty", "loss", "line_search_loss", "seed"}
_TREE_KEYS = {"max_depth", "min_samples_leaf"}


def apply_boost_config(base: BoostParams, config: dict) -> BoostParams:
    """Overlay a flat config dict (as produced by a Grid) onto BoostParams.

    Supported keys: the BoostParams scalars, "weak_learner" ("tree" or
    "stacking"), and the tree fields max_depth / min_samples_leaf (applied to
    a tree weak learner). Unknown keys are rejected.
    """
    params = base
    weak = params.weak_learner
    for key, value in config.items():
        if key in _BOOST_KEYS:
            if key in ("loss", "line_search_loss") and not isinstance(value, Loss):
                value = Loss(value)
            params = replace(params, **{key: value})
        elif key == "weak_learner":
            if value == "tree":
                weak = TreeParams()
            elif value == "stacking":
                weak = StackingParams()
            elif isinstance(value, (TreeParams, StackingParams)):
                weak = value
            else:
                raise ValueError(f"bad weak_learner value {value!r}")
        elif key in _TREE_KEYS:
            if not isinstance(weak, TreeParams):
                weak = TreeParams()
            weak = replace(weak, **{key: int(value)})
        else:
            raise ValueError(f"unknown boosting config key {key!r}")
    return replace(params, weak_learner=weak)


def make_boost_fit_factory(base: BoostParams):
    """Factory of fit procedures for cross-validation and grid search.

    Returns ``factory(config) -> fit`` where ``fit(slice)`` runs base_boost
    with the config overlaid on the base parameters.
    """

    def factory(config: dict):
        params = apply_boost_config(base, config)

        def fit(train_slice: TargetSlice) -> AdditiveExpansion:
            return base_boost(train_slice, params)

        return fit

    return factory


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def boost_params_to_dict(params: BoostParams) -> dict:
    return {
        "n_stages": params.n_stages,
        "loss": params.loss.value,
        "line_search_loss": params.line_search_loss.value,
        "l1_penalty": float(params.l1_penalty),
        "learning_rate": float(params.learning_rate),
        "weak_learner": weak_learner_params_to_dict(params.weak_learner),
        "seed": params.seed,
    }


def boost_params_from_dict(payload: dict) -> BoostParams:
    return BoostParams(
        n_stages=int(payload["n_stages"]),
        loss=Loss(payload["loss"]),
        line_search_loss=Loss(payload["line_search_loss"]),
        l1_penalty=float(payload["l1_penalty"]),
        learning_rate=float(payload["learning_rate"]),
        weak_learner=weak_learner_params_from_dict(payload["weak_learner"]),
        seed=int(payload["seed"]),
    )


def expansion_to_dict(model: AdditiveExpansion) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "target_index": model.target_index,
        "n_features": model.n_features,
        "params": boost_params_to_dict(model.params) if model.params is not None else None,
        "stages": [
            {"alpha": float(s.coefficient), "learner": learner_to_dict(s.learner)}
            for s in model.stages
        ],
        "early_stopped_at": model.early_stopped_at,
    }


def expansion_from_dict(payload: dict) -> AdditiveExpansion:
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {payload.get('schema_version')!r}")
    params = payload.get("params")
    return AdditiveExpansion(
        target_index=int(payload["target_index"]),
        n_features=int(payload["n_features"]),
        stages=[
            Stage(float(s["alpha"]), learner_from_dict(s["learner"]))
            for s in payload["stages"]
        ],
        params=boost_params_from_dict(params) if params is not None else None,
        early_stopped_at=payload.get("early_stopped_at"),
    )
