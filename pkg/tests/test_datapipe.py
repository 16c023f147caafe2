import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqcbench.datapipe import (
    TabularPreprocessor,
    fetch_dataset,
    load_dataset,
    load_manifest,
    make_splits,
    resolve_path,
    split,
    split_sizes,
)
from vqcbench.exceptions import ConfigurationError, DataError


@pytest.fixture(scope="module")
def boston():
    return load_dataset("boston")


@pytest.fixture
def boston_csv(tmp_path):
    src = resolve_path("boston")
    dst = tmp_path / "boston.csv"
    dst.write_bytes(src.read_bytes())
    return dst


class TestLoad:
    def test_boston(self, boston):
        assert boston.X.shape == (506, 13) and boston.y.shape == (506,)
        assert boston.task == "regression" and boston.feature_names[0] == "CRIM"
        assert boston.warning

    def test_checksum_mismatch(self, boston_csv):
        with open(boston_csv, "a") as fh:
            fh.write("\n")
        with pytest.raises(DataError, match="checksum"):
            load_dataset("boston", path=boston_csv)

    def test_truncated(self, boston_csv):
        lines = boston_csv.read_text().splitlines()
        boston_csv.write_text("\n".join(lines[:100]) + "\n")
        with pytest.raises(DataError, match="rows"):
            load_dataset("boston", path=boston_csv, verify_checksum=False)

    def test_missing_column_is_named(self, boston_csv):
        text = boston_csv.read_text().replace("PTRATIO", "PTRATIO_X", 1)
        boston_csv.write_text(text)
        with pytest.raises(DataError, match="PTRATIO"):
            load_dataset("boston", path=boston_csv, verify_checksum=False)

    def test_bad_value_names_column(self, boston_csv):
        lines = boston_csv.read_text().splitlines()
        header = lines[0].split(",")
        row = lines[5].split(",")
        row[header.index('"NOX"')] = "abc"
        lines[5] = ",".join(row)
        boston_csv.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="NOX"):
            load_dataset("boston", path=boston_csv, verify_checksum=False)

    def test_unfetched_dataset(self, tmp_path, monkeypatch):
        monkeypatch.setenv("VQCBENCH_DATA", str(tmp_path))
        with pytest.raises(DataError, match="fetch-data"):
            load_dataset("wine_red")

    def test_unknown_dataset(self):
        with pytest.raises(ConfigurationError):
            load_dataset("iris")


class TestSplit:
    def test_boston_sizes(self):
        assert split_sizes(506) == (354, 75, 77)
        assert split(506, 0).sizes() == (354, 75, 77)

    def test_deterministic(self):
        a, b = split(506, 7), split(506, 7)
        assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("train", "val", "test"))
        assert not np.array_equal(split(506, 8).train, a.train)

    @given(st.integers(10, 3000), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_partition(self, n, seed):
        s = split(n, seed)
        allidx = np.concatenate([s.train, s.val, s.test])
        assert np.array_equal(np.sort(allidx), np.arange(n))
        assert s.sizes() == split_sizes(n)

    def test_too_small(self):
        with pytest.raises(DataError):
            split(5, 0)

    def test_subsample(self, boston):
        parts = make_splits(boston, 0, subsample=100)
        full = make_splits(boston, 0)
        assert len(parts.y_train) == 100 and np.array_equal(parts.y_test, full.y_test)
        assert set(map(tuple, parts.X_train)) <= set(map(tuple, full.X_train))


class TestPreprocessor:
    def test_scaler_moments(self, rng):
        X = rng.normal(3, 5, size=(200, 4))
        Z = TabularPreprocessor().fit(X, rng.normal(size=200)).transform(X)
        assert np.allclose(Z.mean(0), 0, atol=1e-12) and np.allclose(Z.std(0), 1)

    def test_clip_percentiles_on_one_to_hundred(self):
        y = np.arange(1, 101, dtype=float)
        pre = TabularPreprocessor().fit(np.c_[y, -y], y)
        # linear interpolation at rank 0.04 * 99 = 3.96 and 0.96 * 99 = 95.04
        assert pre.clip_low_ == pytest.approx(4.96)
        assert pre.clip_high_ == pytest.approx(96.04)
        c = np.clip(y, 4.96, 96.04)
        assert np.allclose(pre.transform_target(y), (c - c.mean()) / c.std())

    def test_inverse_round_trip(self, rng):
        y = rng.normal(size=50)
        pre = TabularPreprocessor().fit(rng.normal(size=(50, 2)), y)
        assert np.allclose(pre.inverse_transform_target(pre.transform_target(y)), pre.clip_target(y))

    def test_degenerate_target(self, rng):
        pre = TabularPreprocessor().fit(rng.normal(size=(20, 2)), np.full(20, 4.0))
        assert np.allclose(pre.transform_target(np.full(3, 4.0)), 0)

    def test_fit_uses_only_training_rows(self, boston):
        parts = make_splits(boston, 3)
        pre = TabularPreprocessor().fit(parts.X_train, parts.y_train)
        assert np.allclose(pre.scaler_.mean_, parts.X_train.mean(0))
        assert np.allclose(pre.scaler_.scale_, parts.X_train.std(0))

    def test_constant_feature_dropped(self, rng):
        X = np.c_[rng.normal(size=30), np.ones(30), rng.normal(size=30)]
        with pytest.warns(RuntimeWarning, match="constant"):
            pre = TabularPreprocessor().fit(X, rng.normal(size=30))
        assert pre.transform(X).shape == (30, 2)

    def test_no_warning_when_all_vary(self, rng):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            TabularPreprocessor().fit(rng.normal(size=(30, 3)), rng.normal(size=30))

    def test_unseen_class(self, rng):
        pre = TabularPreprocessor("classification").fit(rng.normal(size=(6, 2)), [3, 5, 5, 6, 3, 8])
        assert pre.transform_target([5, 4, 8, 9, 3, 1]).tolist() == [1, -1, 3, -1, 0, -1]
        assert pre.inverse_transform_target([0, 3]).tolist() == [3, 8]

    def test_feature_count_checked(self, rng):
        pre = TabularPreprocessor().fit(rng.normal(size=(10, 3)), rng.normal(size=10))
        with pytest.raises(DataError):
            pre.transform(rng.normal(size=(2, 4)))


def _wine_source(path, n, rng, features):
    header = ";".join(f'"{c}"' for c in features + ["quality"])
    rows = [";".join(f"{v:.3f}" for v in rng.uniform(0.1, 10, len(features))) + f";{q}"
            for q in rng.integers(3, 9, n)]
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path.as_uri()


class TestFetch:
    def test_wine_red_from_file_url(self, tmp_path, rng):
        entry = load_manifest()["wine_red"]
        url = _wine_source(tmp_path / "red.csv", entry["n_rows"], rng, entry["features"])
        out = fetch_dataset("wine_red", data_dir=tmp_path / "data", urls={"red": url})
        ds = load_dataset("wine_red", path=out)
        assert ds.X.shape == (1599, 11) and ds.task == "classification"
        assert json.dumps(ds.feature_names) == json.dumps(entry["features"])

    def test_wrong_row_count_rejected(self, tmp_path, rng):
        entry = load_manifest()["wine_red"]
        url = _wine_source(tmp_path / "red.csv", 50, rng, entry["features"])
        with pytest.raises(DataError, match="rows"):
            fetch_dataset("wine_red", data_dir=tmp_path / "data", urls={"red": url})

    def test_unreachable_source(self, tmp_path):
        with pytest.raises(DataError, match="could not fetch"):
            fetch_dataset("wine_red", data_dir=tmp_path, urls={"red": (tmp_path / "nope.csv").as_uri()})

    def test_bundled_copy(self, tmp_path):
        out = fetch_dataset("boston", data_dir=tmp_path)
        assert load_dataset("boston", path=out).X.shape == (506, 13)
