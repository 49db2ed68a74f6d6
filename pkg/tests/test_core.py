import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from priorboost.core import (
    Dataset,
    Loss,
    SplitSpec,
    average_mae,
    dataset_fingerprint,
    load_dataset_csv,
    loss_value,
    mae,
    negative_gradient,
    pairwise_correlations,
    save_dataset_csv,
    split,
    split_indices,
)


def make_dataset(m=12, n=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(m, n)), rng.normal(size=(m, n)))


class TestDataset:
    def test_default_names(self):
        ds = make_dataset(m=4, n=2)
        assert ds.feature_names == ["X1", "X2"]
        assert ds.target_names == ["Y1", "Y2"]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="identical shape"):
            Dataset(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_non_finite_rejected(self):
        bad = np.zeros((3, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(bad, np.zeros((3, 2)))
        bad[1, 1] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.zeros((3, 2)), bad)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((0, 2)), np.zeros((0, 2)))

    def test_target_slice(self):
        ds = make_dataset(m=6, n=3)
        sl = ds.target_slice(1)
        assert sl.target_index == 1
        np.testing.assert_array_equal(sl.target, ds.targets[:, 1])
        np.testing.assert_array_equal(sl.prior, ds.examples[:, 1])
        with pytest.raises(ValueError):
            ds.target_slice(3)

    def test_fingerprint_tracks_rows(self):
        ds = make_dataset()
        assert dataset_fingerprint(ds) == dataset_fingerprint(ds)
        assert dataset_fingerprint(ds) != dataset_fingerprint(ds.subset(np.arange(5)))


class TestSplit:
    def test_paper_scale_partition(self):
        # 136 rows at the default 0.70 fraction -> 95 train, 41 test
        train, test = split(make_dataset(m=136, n=5), SplitSpec())
        assert (train.m, test.m) == (95, 41)

    def test_sequential_identity_order(self):
        ds = make_dataset(m=10, n=2)
        train, test = split(ds, SplitSpec(0.5, seed=3, shuffle=False))
        np.testing.assert_array_equal(train.examples, ds.examples[:5])
        np.testing.assert_array_equal(test.examples, ds.examples[5:])

    def test_shuffled_deterministic(self):
        ds = make_dataset(m=10, n=2)
        spec = SplitSpec(0.5, seed=11, shuffle=True)
        a = split(ds, spec)
        b = split(ds, spec)
        np.testing.assert_array_equal(a[0].examples, b[0].examples)
        np.testing.assert_array_equal(a[1].targets, b[1].targets)

    def test_disjoint_and_covering(self):
        for seed in range(5):
            tr, te = split_indices(23, SplitSpec(0.6, seed=seed, shuffle=True))
            both = np.concatenate([tr, te])
            assert sorted(both) == list(range(23))

    def test_degenerate_split_rejected(self):
        with pytest.raises(ValueError, match="degenerate split"):
            split(make_dataset(m=3, n=2), SplitSpec(0.9))
        with pytest.raises(ValueError, match="degenerate split"):
            split(make_dataset(m=10, n=2), SplitSpec(0.05))

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(train_fraction=1.0)
        with pytest.raises(ValueError):
            SplitSpec(train_fraction=0.0)


class TestLoss:
    def test_absolute_values(self):
        assert loss_value(Loss.ABSOLUTE, 3.0, 1.0) == 2.0
        assert loss_value(Loss.ABSOLUTE, 1.5, 1.5) == 0.0

    def test_squared_values(self):
        assert loss_value(Loss.SQUARED, 3.0, 1.0) == 4.0
        assert loss_value(Loss.SQUARED, 2.0, 2.0) == 0.0

    def test_negative_gradient_absolute(self):
        assert negative_gradient(Loss.ABSOLUTE, 3.0, 1.0) == 1.0
        assert negative_gradient(Loss.ABSOLUTE, 1.0, 3.0) == -1.0
        assert negative_gradient(Loss.ABSOLUTE, 1.0, 1.0) == 0.0

    def test_negative_gradient_squared(self):
        assert negative_gradient(Loss.SQUARED, 3.0, 1.0) == 2.0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            loss_value(Loss.ABSOLUTE, np.nan, 1.0)
        with pytest.raises(ValueError):
            negative_gradient(Loss.SQUARED, 1.0, np.inf)

    def test_vectorized_matches_scalar(self, rng):
        y = rng.normal(size=20)
        p = rng.normal(size=20)
        vec = loss_value(Loss.ABSOLUTE, y, p)
        assert vec.shape == (20,)
        for i in range(20):
            assert vec[i] == loss_value(Loss.ABSOLUTE, y[i], p[i])

    @given(
        st.floats(-1e6, 1e6, allow_nan=False),
        st.floats(-1e6, 1e6, allow_nan=False),
    )
    def test_absolute_gradient_is_sign(self, y, p):
        assert negative_gradient(Loss.ABSOLUTE, y, p) in (-1.0, 0.0, 1.0)

    @given(
        st.lists(
            st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
            min_size=1,
            max_size=20,
        )
    )
    def test_multi_target_loss_decomposes(self, pairs):
        # the multi-target absolute loss is exactly the sum of per-target calls
        y = np.array([a for a, _ in pairs])
        p = np.array([b for _, b in pairs])
        total = 0.0
        for j in range(len(pairs)):
            total += loss_value(Loss.ABSOLUTE, y[j], p[j])
        assert math.fsum(np.abs(y - p)) == pytest.approx(total, abs=0.0, rel=1e-15)


class TestMetrics:
    def test_mae_example(self):
        assert mae([1.0, 2.0], [2.0, 4.0]) == 1.5

    def test_mae_identity(self, rng):
        y = rng.normal(size=10)
        assert mae(y, y) == 0.0

    def test_mae_against_plain_summation(self, rng):
        y = rng.normal(size=100)
        p = rng.normal(size=100)
        # independent oracle: plain python accumulation
        expected = sum(abs(float(a) - float(b)) for a, b in zip(y, p)) / 100.0
        assert mae(y, p) == pytest.approx(expected, rel=1e-14)

    def test_mae_shape_errors(self):
        with pytest.raises(ValueError):
            mae([1.0, 2.0], [1.0])

    def test_average_mae_example(self):
        Y = np.array([[0.0, 0.0], [0.0, 0.0]])
        P = np.array([[1.0, 2.0], [1.0, 2.0]])
        assert average_mae(Y, P) == 1.5

    def test_average_mae_identity(self, rng):
        Y = rng.normal(size=(7, 3))
        assert average_mae(Y, Y) == 0.0

    def test_average_mae_is_mean_of_column_maes(self, rng):
        Y = rng.normal(size=(30, 4))
        P = rng.normal(size=(30, 4))
        per_column = [mae(Y[:, j], P[:, j]) for j in range(4)]
        expected = float(np.mean(per_column))
        assert abs(average_mae(Y, P) - expected) <= 1e-12 * max(1.0, abs(expected))


class TestPairwiseCorrelations:
    def test_unit_diagonal_and_symmetry(self, rng):
        ds = make_dataset(m=40, n=3, seed=4)
        corr = pairwise_correlations(ds)
        assert corr.shape == (6, 6)
        np.testing.assert_array_equal(np.diag(corr), np.ones(6))
        np.testing.assert_array_equal(corr, corr.T)
        assert np.all(corr >= -1.0) and np.all(corr <= 1.0)

    def test_affine_relation_gives_unit_correlation(self, rng):
        X = rng.normal(size=(25, 2))
        ds = Dataset(X, 2.0 * X + 3.0)
        corr = pairwise_correlations(ds)
        assert corr[0, 2] == pytest.approx(1.0, abs=1e-12)
        assert corr[1, 3] == pytest.approx(1.0, abs=1e-12)

    def test_matches_stdlib_correlation(self, rng):
        ds = make_dataset(m=50, n=2, seed=9)
        corr = pairwise_correlations(ds)
        data = np.hstack([ds.examples, ds.targets])
        for a in range(4):
            for b in range(4):
                expected = statistics.correlation(list(data[:, a]), list(data[:, b])) if a != b else 1.0
                assert corr[a, b] == pytest.approx(expected, abs=1e-10)

    def test_zero_variance_column_flagged(self):
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        Y = np.column_stack([np.arange(10.0), np.arange(10.0)])
        ds = Dataset(X, Y)
        with pytest.warns(UserWarning, match="zero-variance"):
            corr = pairwise_correlations(ds)
        assert corr[0, 1] == 0.0
        assert corr[0, 0] == 1.0

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            pairwise_correlations(make_dataset(m=1, n=2))


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        ds = Dataset(
            rng.normal(size=(9, 2)),
            rng.normal(size=(9, 2)),
            ["qa", "qb"],
            ["ta", "tb"],
            units="MHz",
        )
        path = tmp_path / "data.csv"
        save_dataset_csv(ds, path)
        loaded = load_dataset_csv(path, units="MHz")
        np.testing.assert_array_equal(loaded.examples, ds.examples)
        np.testing.assert_array_equal(loaded.targets, ds.targets)
        assert loaded.feature_names == ["qa", "qb"]
        assert loaded.target_names == ["ta", "tb"]
        assert loaded.units == "MHz"

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("X1,Y1\n1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="row 3"):
            load_dataset_csv(path)

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("X1,Y1\n1.0,huh\n")
        with pytest.raises(ValueError, match="'Y1'"):
            load_dataset_csv(path)

    def test_non_finite_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("X1,Y1\n1.0,inf\n")
        with pytest.raises(ValueError, match="non-finite"):
            load_dataset_csv(path)

    def test_odd_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("X1,X2,Y1\n1.0,2.0,3.0\n")
        with pytest.raises(ValueError, match="2n column names"):
            load_dataset_csv(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_dataset_csv(path)
