"""Weak learners used as boosting basis functions.

Three concrete learners: a greedy CART regression tree grown by variance
reduction, an ordinary least-squares linear model, and a two-layer stacking
regressor whose meta model is fitted on out-of-fold base predictions only.
All fitted learners expose ``predict`` accepting a single feature vector
(returns a float) or a matrix (returns a vector), and are immutable after
fitting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._util import derive_seed, fold_assignments

__all__ = [
    "TreeParams",
    "RegressionTree",
    "fit_tree",
    "predict_tree",
    "LinearModel",
    "fit_linear",
    "StackingParams",
    "StackingRegressor",
    "fit_stacking",
    "learner_to_dict",
    "learner_from_dict",
]

_MAX_TREE_DEPTH = 16
_GAIN_TOL = 1e-12
_OOF_TAG = 0x00F0


def _check_xy(X, r) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if X.ndim != 2 or r.ndim != 1 or X.shape[0] != r.shape[0]:
        raise ValueError(f"need X (m, n) and r (m,), got {X.shape} and {r.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(r))):
        raise ValueError("training data contains non-finite entries")
    return X, r


def _predict_input(X, n_features: int):
    """Normalize predict input: 1-D vector -> (1, n) with scalar-output flag."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(
            f"dimension mismatch: model expects {n_features} features, got shape {X.shape}"
        )
    return X, single


# ---------------------------------------------------------------------------
# CART regression tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 3
    min_samples_leaf: int = 2
    split_criterion: str = "variance_reduction"

    def __post_init__(self):
        if not 1 <= self.max_depth <= _MAX_TREE_DEPTH:
            raise ValueError(f"max_depth must be in [1, {_MAX_TREE_DEPTH}], got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.split_criterion != "variance_reduction":
            raise ValueError(f"unknown split_criterion {self.split_criterion!r}")


@dataclass
class RegressionTree:
    """Flat node arrays: feature < 0 marks a leaf; value holds the node mean."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    def predict(self, X):
        X, single = _predict_input(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                break
            ids = node[active]
            go_left = X[active, feat[active]] <= self.threshold[ids]
            node[active] = np.where(go_left, self.left[ids], self.right[ids])
        out = self.value[node]
        return float(out[0]) if single else out

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


def _best_split(X, r, rows, min_leaf):
    """Best (feature, threshold, gain) at a node, or None.

    Thresholds sit at midpoints between consecutive distinct sorted feature
    values; a candidate is valid only if both children keep min_leaf rows.
    Ties keep the lowest feature index, then the lowest threshold.
    """
    m_node = rows.size
    rsub = r[rows]
    total1 = float(np.sum(rsub))
    total2 = float(np.sum(rsub * rsub))
    parent_sse = max(total2 - total1 * total1 / m_node, 0.0)
    best = None
    best_gain = _GAIN_TOL * max(1.0, parent_sse)
    counts_left = np.arange(1, m_node, dtype=np.float64)
    for f in range(X.shape[1]):
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xo = xs[order]
        ro = rsub[order]
        boundary = xo[1:] != xo[:-1]
        valid = boundary & (counts_left >= min_leaf) & (m_node - counts_left >= min_leaf)
        if not np.any(valid):
            continue
        c1 = np.cumsum(ro)[:-1]
        c2 = np.cumsum(ro * ro)[:-1]
        sse_left = np.maximum(c2 - c1 * c1 / counts_left, 0.0)
        sse_right = np.maximum(
            (total2 - c2) - (total1 - c1) ** 2 / (m_node - counts_left), 0.0
        )
        total_sse = np.where(valid, sse_left + sse_right, np.inf)
        pos = int(np.argmin(total_sse))
        gain = parent_sse - float(total_sse[pos])
        if gain > best_gain:
            lo, hi = float(xo[pos]), float(xo[pos + 1])
            threshold = 0.5 * (lo + hi)
            # midpoints can collapse onto hi for adjacent floats; keep the
            # "x <= threshold goes left" routing consistent with the split
            if threshold >= hi:
                threshold = lo
            best = (f, threshold)
            best_gain = gain
    if best is None:
        return None
    return best[0], best[1], best_gain


def fit_tree(X, r, params: TreeParams = TreeParams()) -> RegressionTree:
    """Grow a CART regression tree on residuals r by greedy variance reduction.

    Growth stops on depth, on the min_samples_leaf constraint, or when no
    split reduces the node SSE. Leaf values are means of the rows routed to
    the leaf, so predictions never leave [min(r), max(r)]. A constant
    residual vector yields a single-leaf tree.
    """
    X, r = _check_xy(X, r)
    if X.shape[0] < 2 * params.min_samples_leaf:
        raise ValueError(
            f"need at least {2 * params.min_samples_leaf} rows, got {X.shape[0]}"
        )
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def build(rows: np.ndarray, depth: int) -> int:
        node_id = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(r[rows])))
        if depth >= params.max_depth or rows.size < 2 * params.min_samples_leaf:
            return node_id
        found = _best_split(X, r, rows, params.min_samples_leaf)
        if found is None:
            return node_id
        f, thr, _ = found
        go_left = X[rows, f] <= thr
        feature[node_id] = f
        threshold[node_id] = thr
        left[node_id] = build(rows[go_left], depth + 1)
        right[node_id] = build(rows[~go_left], depth + 1)
        return node_id

    build(np.arange(X.shape[0]), 0)
    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        n_features=X.shape[1],
    )


def predict_tree(tree: RegressionTree, x) -> float:
    """Route a single feature vector to its leaf; ties (x == threshold) go left."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict_tree expects a single feature vector")
    return tree.predict(x)


# ---------------------------------------------------------------------------
# Linear least squares
# ---------------------------------------------------------------------------

@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float
    rank_deficient: bool = False

    def predict(self, X):
        X, single = _predict_input(X, self.coef.shape[0])
        out = X @ self.coef + self.intercept
        return float(out[0]) if single else out


def fit_linear(X, r) -> LinearModel:
    """Least-squares fit with intercept via SVD; deterministic.

    Features and targets are centered before the solve, so the intercept
    absorbs the means (a constant feature column gets coefficient 0 and the
    intercept becomes mean(r)). Rank-deficient systems fall back to the
    minimum-norm coefficient vector and the model is flagged plus warned.
    """
    X, r = _check_xy(X, r)
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 rows, got {X.shape[0]}")
    x_mean = X.mean(axis=0)
    r_mean = float(r.mean())
    coef, _, rank, _ = np.linalg.lstsq(X - x_mean, r - r_mean, rcond=None)
    deficient = rank < X.shape[1]
    if deficient:
        warnings.warn(
            "rank-deficient linear system; using minimum-norm solution",
            stacklevel=2,
        )
    return LinearModel(
        coef=coef.copy(),
        intercept=r_mean - float(x_mean @ coef),
        rank_deficient=deficient,
    )


# ---------------------------------------------------------------------------
# Two-layer stacking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StackingParams:
    """Stacking composition: base learner specs, linear meta model, oof folds.

    A base learner spec is the string "linear", a TreeParams, or any object
    with a ``fit(X, r) -> fitted`` method returning a predictor.
    """

    base_learners: tuple = ("linear", TreeParams())
    meta_learner: str = "linear"
    oof_folds: int = 5

    def __post_init__(self):
        if len(self.base_learners) < 2:
            raise ValueError("stacking needs at least 2 base learners")
        if self.meta_learner != "linear":
            raise ValueError(f"unsupported meta_learner {self.meta_learner!r}")
        if self.oof_folds < 2:
            raise ValueError(f"oof_folds must be >= 2, got {self.oof_folds}")


@dataclass
class StackingRegressor:
    base_models: list
    meta_coef: np.ndarray
    meta_intercept: float
    ridge_fallback: bool
    n_features: int
    # training-time out-of-fold base predictions, kept for audit; not serialized
    oof_predictions: np.ndarray | None = None

    def predict(self, X):
        X, single = _predict_input(X, self.n_features)
        base_preds = np.column_stack([m.predict(X) for m in self.base_models])
        out = base_preds @ self.meta_coef + self.meta_intercept
        return float(out[0]) if single else out


def _fit_base(spec, X, r):
    if spec == "linear":
        return fit_linear(X, r)
    if isinstance(spec, TreeParams):
        return fit_tree(X, r, spec)
    if hasattr(spec, "fit"):
        return spec.fit(X, r)
    raise ValueError(f"unknown base learner spec {spec!r}")


def fit_stacking(X, r, params: StackingParams = StackingParams(), seed: int = 0) -> StackingRegressor:
    """Fit the two-layer stacking regressor.

    Base learners produce out-of-fold predictions over a seeded oof_folds
    partition; the linear meta model is fitted on those predictions only
    (never on resubstitution predictions), then every base learner is refit
    on all rows for inference. A singular meta system falls back to a ridge
    solve (lambda = 1e-8) and is flagged.
    """
    X, r = _check_xy(X, r)
    m = X.shape[0]
    if m < params.oof_folds:
        raise ValueError(f"need m >= oof_folds, got m={m}, oof_folds={params.oof_folds}")
    n_bases = len(params.base_learners)
    assignments = fold_assignments(m, params.oof_folds, derive_seed(seed, _OOF_TAG))
    oof = np.empty((m, n_bases), dtype=np.float64)
    for fold in range(params.oof_folds):
        held = assignments == fold
        for b, spec in enumerate(params.base_learners):
            model = _fit_base(spec, X[~held], r[~held])
            oof[held, b] = model.predict(X[held])

    design = np.column_stack([np.ones(m), oof])
    sol, _, rank, _ = np.linalg.lstsq(design, r, rcond=None)
    ridge_fallback = rank < design.shape[1]
    if ridge_fallback:
        warnings.warn("singular stacking meta system; ridge fallback (1e-8)", stacklevel=2)
        lam = 1e-8
        gram = design.T @ design
        gram += lam * np.diag([0.0] + [1.0] * n_bases)  # intercept unpenalized
        sol = np.linalg.solve(gram, design.T @ r)

    full_models = [_fit_base(spec, X, r) for spec in params.base_learners]
    return StackingRegressor(
        base_models=full_models,
        meta_coef=sol[1:].copy(),
        meta_intercept=float(sol[0]),
        ridge_fallback=ridge_fallback,
        n_features=X.shape[1],
        oof_predictions=oof,
    )


# ---------------------------------------------------------------------------
# Serialization (embedded in the model JSON)
# ---------------------------------------------------------------------------

def tree_params_to_dict(params: TreeParams) -> dict:
    return {
        "kind": "tree",
        "max_depth": params.max_depth,
        "min_samples_leaf": params.min_samples_leaf,
        "split_criterion": params.split_criterion,
    }


def stacking_params_to_dict(params: StackingParams) -> dict:
    bases = []
    for spec in params.base_learners:
        if spec == "linear":
            bases.append({"kind": "linear"})
        elif isinstance(spec, TreeParams):
            bases.append(tree_params_to_dict(spec))
        else:
            raise ValueError(f"base learner spec {spec!r} is not serializable")
    return {
        "kind": "stacking",
        "base_learners": bases,
        "meta_learner": params.meta_learner,
        "oof_folds": params.oof_folds,
    }


def weak_learner_params_to_dict(params) -> dict:
    if isinstance(params, TreeParams):
        return tree_params_to_dict(params)
    if isinstance(params, StackingParams):
        return stacking_params_to_dict(params)
    raise ValueError(f"unknown weak learner params {params!r}")


def weak_learner_params_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind == "tree":
        return TreeParams(
            max_depth=int(payload["max_depth"]),
            min_samples_leaf=int(payload["min_samples_leaf"]),
            split_criterion=payload.get("split_criterion", "variance_reduction"),
        )
    if kind == "stacking":
        bases = []
        for item in payload["base_learners"]:
            if item["kind"] == "linear":
                bases.append("linear")
            else:
                bases.append(weak_learner_params_from_dict(item))
        return StackingParams(
            base_learners=tuple(bases),
            meta_learner=payload.get("meta_learner", "linear"),
            oof_folds=int(payload["oof_folds"]),
        )
    raise ValueError(f"unknown weak learner kind {kind!r}")


def learner_to_dict(model) -> dict:
    """Serialize a fitted learner to a JSON-safe dict; exact float round trip."""
    if isinstance(model, RegressionTree):
        return {
            "kind": "tree",
            "feature": model.feature.tolist(),
            "threshold": [float(v) for v in model.threshold],
            "left": model.left.tolist(),
            "right": model.right.tolist(),
            "value": [float(v) for v in model.value],
            "n_features": model.n_features,
        }
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "coef": [float(v) for v in model.coef],
            "intercept": float(model.intercept),
            "rank_deficient": bool(model.rank_deficient),
        }
    if isinstance(model, StackingRegressor):
        return {
            "kind": "stacking",
            "bases": [learner_to_dict(b) for b in model.base_models],
            "meta_coef": [float(v) for v in model.meta_coef],
            "meta_intercept": float(model.meta_intercept),
            "ridge_fallback": bool(model.ridge_fallback),
            "n_features": model.n_features,
        }
    raise ValueError(f"cannot serialize learner of type {type(model).__name__}")


def learner_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind == "tree":
        return RegressionTree(
            feature=np.array(payload["feature"], dtype=np.int64),
            threshold=np.array(payload["threshold"], dtype=np.float64),
            left=np.array(payload["left"], dtype=np.int64),
            right=np.array(payload["right"], dtype=np.int64),
            value=np.array(payload["value"], dtype=np.float64),
            n_features=int(payload["n_features"]),
        )
    if kind == "linear":
        return LinearModel(
            coef=np.array(payload["coef"], dtype=np.float64),
            intercept=float(payload["intercept"]),
            rank_deficient=bool(payload.get("rank_deficient", False)),
        )
    if kind == "stacking":
        return StackingRegressor(
            base_models=[learner_from_dict(b) for b in payload["bases"]],
            meta_coef=np.array(payload["meta_coef"], dtype=np.float64),
            meta_intercept=float(payload["meta_intercept"]),
            ridge_fallback=bool(payload.get("ridge_fallback", False)),
            n_features=int(payload["n_features"]),
        )
    raise ValueError(f"unknown learner kind {kind!r}")
