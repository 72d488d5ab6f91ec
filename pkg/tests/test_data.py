import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from archsearch import data
from archsearch.errors import DataError


class TestEggbox:
    def test_closed_form_corner_values(self):
        assert data.eggbox_value(0.0, 0.0) == pytest.approx(243.0, abs=1e-12)
        assert data.eggbox_value(np.pi, np.pi) == pytest.approx(32.0, abs=1e-9)
        assert data.eggbox_value(2 * np.pi, 0.0) == pytest.approx(1.0, abs=1e-9)

    def test_uniform_scheme(self):
        ds = data.gen_eggbox(count=500, seed=3)
        assert ds.num_rows == 500 and ds.num_features == 2
        assert ds.feature_names == ("x", "y") and ds.target_names == ("f",)
        assert np.all(ds.features >= 0.0) and np.all(ds.features <= 2 * np.pi)

    def test_targets_in_closed_form_range(self):
        for seed in range(5):
            ds = data.gen_eggbox(count=300, seed=seed)
            assert np.all(ds.targets >= 1.0) and np.all(ds.targets <= 243.0)

    def test_deterministic_per_seed(self):
        a = data.gen_eggbox(count=100, seed=9)
        b = data.gen_eggbox(count=100, seed=9)
        assert np.array_equal(a.features, b.features)

    def test_grid_scheme(self):
        ds = data.gen_eggbox(count=100, seed=0, scheme="grid")
        assert ds.num_rows == 100
        # 10x10 lattice covers the domain corners
        assert ds.features.min() == 0.0 and ds.features.max() == pytest.approx(2 * np.pi)

    def test_grid_partial(self):
        ds = data.gen_eggbox(count=7, seed=0, scheme="grid")
        assert ds.num_rows == 7

    def test_exact_function_evaluation(self):
        ds = data.gen_eggbox(count=50, seed=1)
        expected = data.eggbox_value(ds.features[:, 0], ds.features[:, 1])
        assert np.array_equal(ds.targets[:, 0], expected)


class TestBars:
    def test_balanced_two_class_images(self):
        ds = data.gen_bars(count=200, seed=0)
        assert ds.num_rows == 200
        assert ds.image_shape == (8, 8, 1)
        assert ds.num_classes == 2
        counts = np.bincount(ds.targets)
        assert counts[0] == counts[1] == 100

    def test_bars_are_visible(self):
        ds = data.gen_bars(count=20, seed=1)
        images = ds.features.reshape(-1, 8, 8)
        for i in range(20):
            if ds.targets[i] == 0:
                assert images[i].sum(axis=1).max() > 3.0  # one bright row
            else:
                assert images[i].sum(axis=0).max() > 3.0  # one bright column

    def test_deterministic(self):
        a = data.gen_bars(count=30, seed=5)
        b = data.gen_bars(count=30, seed=5)
        assert np.array_equal(a.features, b.features)


class TestCsv:
    def test_numeric_roundtrip_idempotent(self, tmp_path):
        ds = data.gen_eggbox(count=20, seed=2)
        path = tmp_path / "egg.csv"
        data.write_csv(ds, path)
        loaded = data.load_csv(path, ["f"], "regression")
        assert np.array_equal(loaded.features, ds.features)
        assert np.array_equal(loaded.targets, ds.targets)
        path2 = tmp_path / "egg2.csv"
        data.write_csv(loaded, path2)
        assert path.read_text() == path2.read_text()

    def test_simple_shape(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,t\n1,2,3\n4,5,6\n7,8,9\n")
        ds = data.load_csv(path, ["t"], "regression")
        assert ds.num_rows == 3 and ds.num_features == 2

    def test_duplicate_headers_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,a,t\n1,2,3\n")
        with pytest.raises(DataError, match="duplicate"):
            data.load_csv(path, ["t"], "regression")

    def test_label_encoding_first_appearance(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,label\n1,spam\n2,ham\n3,spam\n")
        ds = data.load_csv(path, ["label"], "classification")
        assert ds.class_names == ("spam", "ham")
        assert list(ds.targets) == [0, 1, 0]

    def test_classification_roundtrip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,label\n1,b\n2,a\n3,b\n4,c\n")
        ds = data.load_csv(path, ["label"], "classification")
        out = tmp_path / "d2.csv"
        data.write_csv(ds, out)
        again = data.load_csv(out, ["label"], "classification")
        assert again.class_names == ds.class_names
        assert np.array_equal(again.targets, ds.targets)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            data.load_csv(tmp_path / "missing.csv", ["t"], "regression")

    def test_missing_target_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="missing target"):
            data.load_csv(path, ["t"], "regression")

    def test_ragged_row_reported_with_location(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,t\n1,2\n3\n")
        with pytest.raises(DataError, match="row 3"):
            data.load_csv(path, ["t"], "regression")

    def test_non_numeric_feature_reported_with_location(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,t\n1,2\nX,4\n")
        with pytest.raises(DataError, match=r"row 3, column 'a'"):
            data.load_csv(path, ["t"], "regression")

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,t\nnan,2\n")
        with pytest.raises(DataError, match="non-finite"):
            data.load_csv(path, ["t"], "regression")


class TestSplit:
    def test_documented_sizes(self):
        ds = data.gen_eggbox(count=1000, seed=0)
        train, val, test = data.split(ds, data.SplitSpec(seed=1))
        assert test.num_rows == 100 and val.num_rows == 90 and train.num_rows == 810

    def test_eggbox_paper_sizes(self):
        ds = data.gen_eggbox(count=4000, seed=0)
        train, val, test = data.split(ds, data.SplitSpec(seed=1))
        assert (train.num_rows, val.num_rows, test.num_rows) == (3240, 360, 400)

    def test_deterministic_per_seed(self):
        ds = data.gen_eggbox(count=200, seed=0)
        a = data.split(ds, data.SplitSpec(seed=7))
        b = data.split(ds, data.SplitSpec(seed=7))
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.features, pb.features)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(40, 400), st.integers(0, 10_000))
    def test_disjoint_cover(self, m, seed):
        rng = np.random.default_rng(seed)
        ds = data.Dataset(
            features=rng.normal(size=(m, 2)),
            targets=rng.normal(size=m),
            task="regression",
            feature_names=("a", "b"),
            target_names=("t",),
        )
        train, val, test = data.split(ds, data.SplitSpec(seed=seed))
        key = lambda part: {tuple(row) for row in part.features}
        union = key(train) | key(val) | key(test)
        assert len(union) == m  # rows are a.s. unique under the normal draw
        assert train.num_rows + val.num_rows + test.num_rows == m

    def test_stratified_balance(self):
        rng = np.random.default_rng(3)
        ds = data.Dataset(
            features=rng.normal(size=(1000, 2)),
            targets=np.repeat([0, 1], 500),
            task="classification",
            feature_names=("a", "b"),
            target_names=("t",),
            class_names=("n", "p"),
        )
        for part in data.split(ds, data.SplitSpec(seed=5)):
            counts = np.bincount(part.targets, minlength=2)
            assert abs(int(counts[0]) - int(counts[1])) <= 1

    def test_small_class_rejected(self):
        ds = data.Dataset(
            features=np.random.default_rng(0).normal(size=(50, 1)),
            targets=np.array([1] + [0] * 49),
            task="classification",
            feature_names=("a",),
            target_names=("t",),
            class_names=("x", "y"),
        )
        with pytest.raises(DataError):
            data.split(ds, data.SplitSpec(seed=0))

    def test_too_small_dataset_rejected(self):
        ds = data.gen_eggbox(count=5, seed=0)
        with pytest.raises(DataError, match="too small"):
            data.split(ds, data.SplitSpec(seed=0))

    def test_stratified_regression_rejected(self):
        ds = data.gen_eggbox(count=100, seed=0)
        with pytest.raises(DataError, match="stratified"):
            data.split(ds, data.SplitSpec(seed=0, stratified=True))


class TestStandardize:
    def test_train_columns_become_standard(self):
        ds = data.gen_eggbox(count=300, seed=4)
        (train, _, _), record = data.standardize(*data.split(ds, data.SplitSpec(seed=0)))
        assert np.all(np.abs(train.features.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(train.features.std(axis=0) - 1.0) < 1e-10)
        assert np.all(np.abs(train.targets.mean(axis=0)) < 1e-10)

    def test_already_standard_unchanged(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(500, 3))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        ds = data.Dataset(x, rng.normal(size=500), "regression", ("a", "b", "c"), ("t",))
        (out,), record = data.standardize(ds, scale_targets=False)
        assert np.max(np.abs(out.features - x)) < 1e-12

    def test_validation_uses_train_statistics(self):
        rng = np.random.default_rng(2)
        train = data.Dataset(rng.normal(size=(100, 1)), rng.normal(size=100),
                             "regression", ("a",), ("t",))
        val = data.Dataset(train.features + 10.0, train.targets, "regression", ("a",), ("t",))
        (train_t, val_t), record = data.standardize(train, val, scale_targets=False)
        # shifted validation features stay shifted after the train transform
        assert val_t.features.mean() == pytest.approx(train_t.features.mean() + 10.0 / record.feature_scale[0], abs=1e-8)

    def test_constant_feature_centered_only(self):
        x = np.column_stack([np.full(50, 3.0), np.arange(50.0)])
        ds = data.Dataset(x, np.arange(50.0), "regression", ("c", "v"), ("t",))
        (out,), record = data.standardize(ds, scale_targets=False)
        assert record.feature_scale[0] == 1.0
        assert np.all(out.features[:, 0] == 0.0)

    def test_classification_targets_untouched(self):
        ds = data.gen_bars(count=40, seed=0)
        (out,), record = data.standardize(ds)
        assert np.array_equal(out.targets, ds.targets)
        assert record.target_mean is None
