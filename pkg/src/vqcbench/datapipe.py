"""Dataset ingestion, splitting and preprocessing.

Datasets are canonical comma-separated CSV files with a header row. Their
column lists, row counts and (where pinned) SHA-256 digests live in
``data/manifest.json``. Boston Housing ships with the package; the others
are produced by :func:`fetch_dataset` into a user data directory.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import urllib.request
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError, DataError
from .seeding import make_rng

log = logging.getLogger(__name__)

CLIP_PERCENT = 4.0
SPLIT_FRACTIONS = (0.70, 0.15)
DATA_ENV = "VQCBENCH_DATA"


def load_manifest() -> dict:
    return json.loads(resources.files("vqcbench.data").joinpath("manifest.json").read_text())


def dataset_names() -> list[str]:
    return sorted(load_manifest())


def default_data_dir() -> Path:
    env = os.environ.get(DATA_ENV)
    return Path(env) if env else Path.home() / ".cache" / "vqcbench"


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Dataset:
    name: str
    task: str
    feature_names: list
    target_name: str
    X: np.ndarray
    y: np.ndarray
    warning: str | None = None

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def _entry(name: str) -> dict:
    manifest = load_manifest()
    if name not in manifest:
        raise ConfigurationError(f"unknown dataset {name!r}; known: {sorted(manifest)}")
    return manifest[name]


def resolve_path(name: str, path=None, data_dir=None) -> Path:
    entry = _entry(name)
    if path is not None:
        return Path(path)
    candidates = [Path(data_dir) / entry["file"]] if data_dir is not None else []
    candidates.append(default_data_dir() / entry["file"])
    if entry.get("bundled"):
        candidates.append(Path(str(resources.files("vqcbench.data").joinpath(entry["file"]))))
    for c in candidates:
        if c.exists():
            return c
    raise DataError(
        f"dataset {name!r} not found (looked in {[str(c) for c in candidates]}); run `vqcbench fetch-data {name}`"
    )


def load_dataset(name: str, path=None, data_dir=None, verify_checksum: bool = True) -> Dataset:
    """Read and validate a dataset CSV.

    Raises :class:`DataError` on checksum, header, row-count or value problems;
    the message names the offending column where one exists.
    """
    entry = _entry(name)
    csv_path = resolve_path(name, path, data_dir)
    if verify_checksum and entry.get("sha256"):
        digest = sha256_of(csv_path)
        if digest != entry["sha256"]:
            raise DataError(f"{csv_path}: checksum mismatch (expected {entry['sha256']}, got {digest})")
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{csv_path}: empty file")
    header = [h.strip() for h in rows[0]]
    columns = entry["features"] + [entry["target"]]
    for col in columns:
        if col not in header:
            raise DataError(f"{csv_path}: missing column {col!r}")
    body = [r for r in rows[1:] if r]
    if len(body) != entry["n_rows"]:
        raise DataError(f"{csv_path}: expected {entry['n_rows']} rows, found {len(body)}")
    index = [header.index(c) for c in columns]
    values = np.empty((len(body), len(columns)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{csv_path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
        for j, k in enumerate(index):
            try:
                values[i, j] = float(row[k])
            except ValueError:
                raise DataError(f"{csv_path}: column {columns[j]!r} row {i + 1}: bad value {row[k]!r}") from None
    bad = ~np.isfinite(values).all(axis=0)
    if bad.any():
        raise DataError(f"{csv_path}: column {columns[int(np.argmax(bad))]!r} has missing or non-finite values")
    y = values[:, -1]
    if entry["task"] == "classification":
        if not np.all(y == np.round(y)):
            raise DataError(f"{csv_path}: column {entry['target']!r} must hold integer class labels")
        y = y.astype(int)
    if entry.get("warning"):
        log.info("%s: %s", name, entry["warning"])
    return Dataset(name, entry["task"], list(entry["features"]), entry["target"],
                   values[:, :-1], y, entry.get("warning"))


# --- split ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train = int(np.floor(SPLIT_FRACTIONS[0] * n))
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n))
    return n_train, n_val, n - n_train - n_val


def split(n: int, seed: int) -> SplitIndices:
    """Shuffle ``range(n)`` with the seed's split stream and cut 70/15/15."""
    if n < 10:
        raise DataError(f"need at least 10 samples to split, got {n}")
    perm = make_rng(seed, "split").permutation(n)
    n_train, n_val, _ = split_sizes(n)
    return SplitIndices(perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:], int(seed))


# --- preprocessing ----------------------------------------------------------

class TabularPreprocessor(TransformerMixin, BaseEstimator):
    """Feature standardization plus target clipping/standardization.

    Parameters
    ----------
    task : {"regression", "classification"}
    clip_percent : float
        Regression targets are clipped to the ``[clip_percent, 100 - clip_percent]``
        percentiles of the training targets (linear interpolation) before
        standardization.

    Constant training features are dropped with a warning.
    """

    def __init__(self, task: str = "regression", clip_percent: float = CLIP_PERCENT):
        self.task = task
        self.clip_percent = clip_percent

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y)
        if len(y) != X.shape[0]:
            raise DataError("X and y lengths differ")
        std = X.std(axis=0)
        self.keep_ = np.flatnonzero(std > 0)
        if self.keep_.size < X.shape[1]:
            dropped = np.flatnonzero(std == 0).tolist()
            warnings.warn(f"dropping constant feature columns {dropped}", RuntimeWarning, stacklevel=2)
        if self.keep_.size == 0:
            raise DataError("all features are constant on the training split")
        self.scaler_ = StandardScaler().fit(X[:, self.keep_])
        self.n_features_in_ = X.shape[1]
        if self.task == "regression":
            y = y.astype(float)
            self.clip_low_, self.clip_high_ = np.percentile(y, [self.clip_percent, 100 - self.clip_percent])
            clipped = np.clip(y, self.clip_low_, self.clip_high_)
            self.y_mean_ = float(clipped.mean())
            sd = float(clipped.std())
            self.y_scale_ = sd if sd > 0 else 1.0
        elif self.task == "classification":
            self.classes_ = np.unique(y)
        else:
            raise ConfigurationError(f"unknown task {self.task!r}")
        return self

    @property
    def n_features_out(self) -> int:
        check_is_fitted(self, "keep_")
        return int(self.keep_.size)

    def transform(self, X):
        check_is_fitted(self, "scaler_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.scaler_.transform(X[:, self.keep_])

    def clip_target(self, y) -> np.ndarray:
        return np.clip(np.asarray(y, dtype=float), self.clip_low_, self.clip_high_)

    def transform_target(self, y) -> np.ndarray:
        """Standardized clipped targets, or class indices (``-1`` for classes unseen in training)."""
        check_is_fitted(self, "n_features_in_")
        if self.task == "regression":
            return (self.clip_target(y) - self.y_mean_) / self.y_scale_
        y = np.asarray(y)
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        return np.where(self.classes_[idx] == y, idx, -1)

    def inverse_transform_target(self, z) -> np.ndarray:
        if self.task == "regression":
            return np.asarray(z, dtype=float) * self.y_scale_ + self.y_mean_
        return self.classes_[np.asarray(z, dtype=int)]


@dataclass
class ProcessedSplit:
    """Raw arrays of each split plus the preprocessor fitted on the training rows."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    indices: SplitIndices
    meta: dict = field(default_factory=dict)


def make_splits(dataset: Dataset, seed: int, subsample: int | None = None) -> ProcessedSplit:
    """Split ``dataset`` with ``seed``; optionally subsample the training rows."""
    idx = split(dataset.n_samples, seed)
    train = idx.train
    meta = {"n_train_full": int(train.size)}
    if subsample is not None and subsample < train.size:
        if subsample < 2:
            raise ConfigurationError("subsample must be >= 2")
        train = np.sort(make_rng(seed, "subsample").choice(train, size=subsample, replace=False))
        meta["subsample"] = int(subsample)
    X, y = dataset.X, dataset.y
    return ProcessedSplit(X[train], y[train], X[idx.val], y[idx.val], X[idx.test], y[idx.test], idx, meta)


# --- fetching ---------------------------------------------------------------

def _download(url: str, timeout: float = 60.0) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in row])
    tmp.replace(path)


def _parse_wine(raw: bytes, features) -> np.ndarray:
    reader = csv.reader(io.StringIO(raw.decode("utf-8")), delimiter=";")
    header = [h.strip().strip('"') for h in next(reader)]
    cols = list(features) + ["quality"]
    for c in cols:
        if c not in header:
            raise DataError(f"wine source missing column {c!r}")
    pos = [header.index(c) for c in cols]
    return np.array([[float(r[k]) for k in pos] for r in reader if r])


def fetch_dataset(name: str, data_dir=None, urls: dict | None = None, force: bool = False) -> Path:
    """Download ``name`` from its public source and write the canonical CSV.

    The written file is validated with :func:`load_dataset`. ``urls``
    overrides the manifest sources (useful for mirrors and tests).
    """
    entry = _entry(name)
    out_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    target = out_dir / entry["file"]
    if entry.get("bundled"):
        src = resources.files("vqcbench.data").joinpath(entry["file"])
        if force or not target.exists():
            out_dir.mkdir(parents=True, exist_ok=True)
            target.write_bytes(src.read_bytes())
        load_dataset(name, path=target)
        return target
    if target.exists() and not force:
        load_dataset(name, path=target)
        return target
    sources = {**entry.get("urls", {}), **(urls or {})}
    header = entry["features"] + [entry["target"]]
    kind = entry["fetch"]
    try:
        if kind == "wine":
            red = _parse_wine(_download(sources["red"]), entry["features"][:11])
            if name == "wine_red":
                rows = red
            else:
                white = _parse_wine(_download(sources["white"]), entry["features"][:11])
                color = np.r_[np.ones(len(red)), np.zeros(len(white))][:, None]
                both = np.vstack([red, white])
                rows = np.hstack([both[:, :-1], color, both[:, -1:]])
        elif kind == "excel":
            import pandas as pd  # optional: only needed for the spreadsheet source

            frame = pd.read_excel(io.BytesIO(_download(sources["data"])))
            if frame.shape[1] != len(header):
                raise DataError(f"{name}: expected {len(header)} columns, got {frame.shape[1]}")
            rows = frame.to_numpy(dtype=float)
        elif kind == "sklearn_california":
            from sklearn.datasets import fetch_california_housing

            bunch = fetch_california_housing(data_home=str(out_dir / "sklearn"))
            rows = np.hstack([bunch.data, bunch.target[:, None]])
        else:
            raise ConfigurationError(f"unknown fetch kind {kind!r}")
    except (OSError, KeyError, ImportError) as exc:
        raise DataError(f"could not fetch {name!r}: {exc}") from exc
    _write_csv(target, header, rows)
    load_dataset(name, path=target)
    return target
