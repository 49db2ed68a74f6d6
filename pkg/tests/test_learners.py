import numpy as np
import pytest

from priorboost.learners import (
    LinearModel,
    StackingParams,
    TreeParams,
    fit_linear,
    fit_stacking,
    fit_tree,
    learner_from_dict,
    learner_to_dict,
    predict_tree,
)


def brute_force_split_1d(x, r, min_leaf=1):
    """Exhaustive enumeration oracle: best midpoint threshold by total SSE."""
    xs = np.unique(x)
    best = None
    for lo, hi in zip(xs, xs[1:]):
        thr = 0.5 * (lo + hi)
        left = r[x <= thr]
        right = r[x > thr]
        if len(left) < min_leaf or len(right) < min_leaf:
            continue
        sse = float(np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2))
        if best is None or sse < best[0]:
            best = (sse, thr, float(left.mean()), float(right.mean()))
    return best


def normal_equations(X, r):
    """Direct-solve oracle for least squares with intercept."""
    design = np.column_stack([np.ones(len(r)), X])
    beta = np.linalg.solve(design.T @ design, design.T @ r)
    return beta[0], beta[1:]


def tree_train_mse(tree, X, r):
    return float(np.mean((tree.predict(X) - r) ** 2))


class TestTreeParams:
    def test_defaults(self):
        p = TreeParams()
        assert p.max_depth == 3 and p.min_samples_leaf == 2

    def test_depth_cap(self):
        with pytest.raises(ValueError):
            TreeParams(max_depth=17)
        with pytest.raises(ValueError):
            TreeParams(max_depth=0)

    def test_bad_leaf_size(self):
        with pytest.raises(ValueError):
            TreeParams(min_samples_leaf=0)

    def test_bad_criterion(self):
        with pytest.raises(ValueError):
            TreeParams(split_criterion="gini")


class TestFitTree:
    def test_constant_residual_gives_single_leaf(self, rng):
        X = rng.normal(size=(10, 3))
        tree = fit_tree(X, np.full(10, 4.25), TreeParams())
        assert tree.n_leaves == 1
        assert predict_tree(tree, X[0]) == 4.25

    def test_depth_one_split_matches_enumeration_oracle(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([0.0, 0.0, 10.0, 10.0])
        oracle = brute_force_split_1d(X[:, 0], r)
        assert oracle[1:] == (2.5, 0.0, 10.0)  # frozen from the oracle
        tree = fit_tree(X, r, TreeParams(max_depth=1, min_samples_leaf=1))
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 2.5
        assert predict_tree(tree, np.array([1.0])) == 0.0
        assert predict_tree(tree, np.array([4.0])) == 10.0

    def test_random_depth_one_matches_oracle(self, rng):
        for _ in range(20):
            X = rng.normal(size=(30, 1))
            r = rng.normal(size=30)
            oracle = brute_force_split_1d(X[:, 0], r, min_leaf=2)
            tree = fit_tree(X, r, TreeParams(max_depth=1, min_samples_leaf=2))
            assert tree.threshold[0] == pytest.approx(oracle[1], abs=0.0)
            sse = float(np.sum((tree.predict(X) - r) ** 2))
            assert sse == pytest.approx(oracle[0], rel=1e-10)

    def test_never_worse_than_best_constant(self, rng):
        X = rng.normal(size=(40, 4))
        r = rng.normal(size=40)
        tree = fit_tree(X, r)
        constant_mse = float(np.mean((r - r.mean()) ** 2))
        assert tree_train_mse(tree, X, r) <= constant_mse

    def test_predictions_stay_within_residual_range(self, rng):
        for _ in range(10):
            X = rng.normal(size=(25, 3))
            r = rng.normal(size=25)
            tree = fit_tree(X, r)
            preds = tree.predict(rng.normal(size=(50, 3)))
            assert preds.min() >= r.min() - 1e-12
            assert preds.max() <= r.max() + 1e-12

    def test_row_permutation_invariance(self, rng):
        X = rng.normal(size=(30, 3))
        X[:, 1] = np.round(X[:, 1])  # introduce duplicate feature values
        r = rng.normal(size=30)
        perm = rng.permutation(30)
        grid = rng.normal(size=(100, 3))
        a = fit_tree(X, r).predict(grid)
        b = fit_tree(X[perm], r[perm]).predict(grid)
        np.testing.assert_array_equal(a, b)

    def test_deeper_never_hurts_training_mse(self, rng):
        X = rng.normal(size=(60, 3))
        r = rng.normal(size=60)
        errors = [
            tree_train_mse(fit_tree(X, r, TreeParams(max_depth=d)), X, r)
            for d in range(1, 6)
        ]
        for shallow, deep in zip(errors, errors[1:]):
            assert deep <= shallow + 1e-12

    def test_threshold_tie_routes_left(self):
        X = np.array([[1.0], [1.0], [3.0], [3.0]])
        r = np.array([0.0, 0.0, 10.0, 10.0])
        tree = fit_tree(X, r, TreeParams(max_depth=1, min_samples_leaf=1))
        assert tree.threshold[0] == 2.0
        assert predict_tree(tree, np.array([2.0])) == 0.0

    def test_too_few_rows_rejected(self):
        with pytest.raises(ValueError, match="at least"):
            fit_tree(np.zeros((3, 1)), np.zeros(3), TreeParams(min_samples_leaf=2))

    def test_predict_dimension_mismatch(self, rng):
        tree = fit_tree(rng.normal(size=(10, 2)), rng.normal(size=10))
        with pytest.raises(ValueError, match="dimension mismatch"):
            predict_tree(tree, np.zeros(3))

    def test_single_leaf_predicts_everywhere(self, rng):
        tree = fit_tree(rng.normal(size=(8, 2)), np.full(8, -1.5))
        for x in rng.normal(size=(5, 2)):
            assert predict_tree(tree, x) == -1.5


class TestFitLinear:
    def test_exact_linear_recovery(self, rng):
        X = rng.normal(size=(20, 3))
        r = 2.0 * X[:, 0] + 1.0
        model = fit_linear(X, r)
        np.testing.assert_allclose(model.coef, [2.0, 0.0, 0.0], atol=1e-9)
        assert model.intercept == pytest.approx(1.0, abs=1e-9)

    def test_constant_column_gives_mean_intercept(self, rng):
        X = np.full((15, 1), 7.0)
        r = rng.normal(size=15)
        with pytest.warns(UserWarning, match="rank-deficient"):
            model = fit_linear(X, r)
        assert model.rank_deficient
        assert model.coef[0] == pytest.approx(0.0, abs=1e-12)
        assert model.intercept == pytest.approx(float(r.mean()), rel=1e-12)

    def test_matches_normal_equations_oracle(self, rng):
        X = rng.normal(size=(30, 3))
        r = rng.normal(size=30)
        model = fit_linear(X, r)
        intercept, coef = normal_equations(X, r)
        np.testing.assert_allclose(model.coef, coef, atol=1e-9)
        assert model.intercept == pytest.approx(intercept, abs=1e-9)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            fit_linear(np.zeros((1, 2)), np.zeros(1))

    def test_predict_shapes(self, rng):
        model = LinearModel(coef=np.array([1.0, -1.0]), intercept=0.5)
        assert model.predict(np.array([2.0, 1.0])) == 1.5
        out = model.predict(np.array([[2.0, 1.0], [0.0, 0.0]]))
        np.testing.assert_array_equal(out, [1.5, 0.5])


class _MemorizingLearner:
    """1-nearest-neighbor: perfectly memorizes its training rows."""

    def fit(self, X, y):
        X = np.asarray(X, dtype=float).copy()
        y = np.asarray(y, dtype=float).copy()

        class _Fitted:
            def predict(self, Z):
                Z = np.atleast_2d(np.asarray(Z, dtype=float))
                dists = np.linalg.norm(Z[:, None, :] - X[None, :, :], axis=2)
                out = y[np.argmin(dists, axis=1)]
                return float(out[0]) if out.shape == (1,) and Z.shape[0] == 1 else out

        return _Fitted()


class TestFitStacking:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            StackingParams(base_learners=("linear",))
        with pytest.raises(ValueError):
            StackingParams(oof_folds=1)
        with pytest.raises(ValueError):
            StackingParams(meta_learner="tree")

    def test_oof_predictions_avoid_leakage(self, rng):
        # a memorizer predicts training rows exactly, so its resubstitution
        # predictions equal r; the out-of-fold column must differ
        X = rng.normal(size=(25, 2))
        r = rng.normal(size=25)
        params = StackingParams(base_learners=(_MemorizingLearner(), "linear"))
        model = fit_stacking(X, r, params, seed=5)
        oof_memorizer = model.oof_predictions[:, 0]
        resub = model.base_models[0].predict(X)
        np.testing.assert_allclose(resub, r, atol=1e-12)
        assert not np.allclose(oof_memorizer, r)

    def test_meta_matches_normal_equations_on_oof(self, rng):
        X = rng.normal(size=(30, 3))
        r = X[:, 0] + 0.5 * rng.normal(size=30)
        model = fit_stacking(X, r, seed=3)
        intercept, coef = normal_equations(model.oof_predictions, r)
        np.testing.assert_allclose(model.meta_coef, coef, atol=1e-8)
        assert model.meta_intercept == pytest.approx(intercept, abs=1e-8)

    def test_exact_base_learner_dominates_its_oof_error(self, rng):
        X = rng.normal(size=(40, 2))
        r = 3.0 * X[:, 1] - 2.0  # exactly linear: the linear base nails it
        model = fit_stacking(X, r, seed=1)
        oof_linear = model.oof_predictions[:, 0]
        oof_mse = float(np.mean((oof_linear - r) ** 2))
        train_mse = float(np.mean((model.predict(X) - r) ** 2))
        assert train_mse <= oof_mse + 1e-12

    def test_zero_target_gives_zero_meta(self, rng):
        X = rng.normal(size=(20, 2))
        with pytest.warns(UserWarning, match="ridge fallback"):
            model = fit_stacking(X, np.zeros(20), seed=2)
        assert model.ridge_fallback
        np.testing.assert_allclose(model.meta_coef, 0.0, atol=1e-8)
        assert model.meta_intercept == pytest.approx(0.0, abs=1e-8)

    def test_deterministic_given_seed(self, rng):
        X = rng.normal(size=(25, 2))
        r = rng.normal(size=25)
        grid = rng.normal(size=(10, 2))
        a = fit_stacking(X, r, seed=9).predict(grid)
        b = fit_stacking(X, r, seed=9).predict(grid)
        np.testing.assert_array_equal(a, b)

    def test_needs_enough_rows(self):
        with pytest.raises(ValueError, match="oof_folds"):
            fit_stacking(np.zeros((3, 1)), np.zeros(3), StackingParams(oof_folds=5))


class TestLearnerSerialization:
    def test_tree_round_trip(self, rng):
        X = rng.normal(size=(30, 3))
        tree = fit_tree(X, rng.normal(size=30))
        clone = learner_from_dict(learner_to_dict(tree))
        grid = rng.normal(size=(50, 3))
        np.testing.assert_array_equal(tree.predict(grid), clone.predict(grid))

    def test_linear_round_trip(self, rng):
        model = fit_linear(rng.normal(size=(20, 2)), rng.normal(size=20))
        clone = learner_from_dict(learner_to_dict(model))
        grid = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(model.predict(grid), clone.predict(grid))

    def test_stacking_round_trip(self, rng):
        model = fit_stacking(rng.normal(size=(25, 2)), rng.normal(size=25), seed=4)
        clone = learner_from_dict(learner_to_dict(model))
        grid = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(model.predict(grid), clone.predict(grid))

    def test_custom_learner_not_serializable(self, rng):
        params = StackingParams(base_learners=(_MemorizingLearner(), "linear"))
        model = fit_stacking(rng.normal(size=(20, 2)), rng.normal(size=20), params)
        with pytest.raises(ValueError, match="cannot serialize"):
            learner_to_dict(model)
