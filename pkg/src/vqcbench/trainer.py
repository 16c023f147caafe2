"""Experiment runs: train one (config, seed), compute metrics, aggregate seeds."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.metrics import (
    accuracy_score,
    f1_score,
    mean_absolute_error,
    mean_squared_error,
    r2_score,
)

from .archs import ModelConfig
from .datapipe import Dataset, make_splits
from .estimators import VQCClassifier, VQCRegressor
from .exceptions import ConfigurationError

SCHEMA_VERSION = 1
REGRESSION_METRICS = ("r2", "rmse", "mae")
CLASSIFICATION_METRICS = ("accuracy", "macro_f1")


def evaluate_metrics(preds, truth, task: str) -> dict:
    """Regression: ``r2``, ``rmse``, ``mae``. Classification: ``accuracy``, ``macro_f1``.

    Macro-F1 averages over the union of labels present in ``truth`` or
    ``preds``; classes absent from both do not enter the average.
    """
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise ValueError(f"preds {preds.shape} and truth {truth.shape} differ in shape")
    if preds.size == 0:
        raise ValueError("cannot score an empty prediction set")
    if task == "regression":
        if not np.all(np.isfinite(preds.astype(float))):
            return dict.fromkeys(REGRESSION_METRICS, float("nan"))
        return {
            "r2": float(r2_score(truth, preds)),
            "rmse": float(math.sqrt(mean_squared_error(truth, preds))),
            "mae": float(mean_absolute_error(truth, preds)),
        }
    if task == "classification":
        return {
            "accuracy": float(accuracy_score(truth, preds)),
            "macro_f1": float(f1_score(truth, preds, average="macro", zero_division=0)),
        }
    raise ConfigurationError(f"unknown task {task!r}")


@dataclass
class TrainConfig:
    epochs: int = 10000
    learning_rate: float = 0.005
    clip_norm: float = 1.0
    noise: float = 0.0
    subsample: int | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.clip_norm <= 0:
            raise ConfigurationError("clip_norm must be > 0")


def _clean(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class RunRecord:
    """Outcome of one training run.

    ``wall_clock_seconds`` is kept on the object but left out of
    :meth:`to_json` so that the serialized record is a pure function of
    (config, seed).
    """

    experiment: str
    dataset: str
    task: str
    seed: int
    model: dict
    train: dict
    param_breakdown: dict
    split_sizes: dict
    train_loss: list
    val_loss: list
    best_epoch: int
    best_val_loss: float
    early_stop: bool
    early_stop_epoch: int | None
    test_metrics: dict
    val_metrics: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    wall_clock_seconds: float = field(default=0.0, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_clock_seconds")
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)


def train(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
    experiment: str = "run",
    objective=None,
) -> RunRecord:
    """Split, preprocess, train with checkpointing and score the best checkpoint."""
    if model_config.task != dataset.task:
        raise ConfigurationError(f"model task {model_config.task!r} does not match dataset task {dataset.task!r}")
    start = time.perf_counter()
    parts = make_splits(dataset, seed, train_config.subsample)
    cls = VQCRegressor if dataset.task == "regression" else VQCClassifier
    mc = model_config
    est = cls(
        architecture=mc.architecture, depth=mc.depth, heads=mc.heads, connectivity=mc.connectivity,
        layernorm=mc.layernorm, attention=mc.attention, stages=mc.stages, ffn_stages=mc.ffn_stages,
        final_depth=mc.final_depth, readout_skip=mc.readout_skip, hidden_sizes=mc.hidden_sizes,
        mlp_target=mc.mlp_target, epochs=train_config.epochs, learning_rate=train_config.learning_rate,
        clip_norm=train_config.clip_norm, noise=train_config.noise, random_state=seed,
    )
    est.fit(parts.X_train, parts.y_train, eval_set=(parts.X_val, parts.y_val), objective=objective)
    fit = est.fit_result_
    test_metrics = evaluate_metrics(est.predict(parts.X_test), parts.y_test, dataset.task)
    val_metrics = evaluate_metrics(est.predict(parts.X_val), parts.y_val, dataset.task)
    sizes = dict(zip(("train", "val", "test"), parts.indices.sizes()))
    sizes["train_used"] = len(parts.y_train)
    return RunRecord(
        experiment=experiment,
        dataset=dataset.name,
        task=dataset.task,
        seed=int(seed),
        model=est.model_.config.to_dict(),
        train=asdict(train_config),
        param_breakdown=est.model_.count_params().to_dict(),
        split_sizes=sizes,
        train_loss=list(fit.train_loss),
        val_loss=list(fit.val_loss),
        best_epoch=fit.best_epoch,
        best_val_loss=fit.best_val_loss,
        early_stop=fit.early_stop,
        early_stop_epoch=fit.early_stop_epoch,
        test_metrics=test_metrics,
        val_metrics=val_metrics,
        wall_clock_seconds=time.perf_counter() - start,
    )


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (``n - 1`` denominator)."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least two values for a sample standard deviation")
    return float(values.mean()), float(values.std(ddof=1))


def format_pm(mean: float, std: float | None, digits: int = 3) -> str:
    if mean is None or not math.isfinite(mean):
        return "nan"
    if std is None or not math.isfinite(std):
        return f"{mean:.{digits}f}"
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def aggregate_records(records) -> dict:
    """Per-metric mean and sample std across seeds plus per-seed values.

    A single record gives ``std = None``.
    """
    records = list(records)
    if not records:
        raise ValueError("nothing to aggregate")
    first = records[0]
    metrics = {}
    for name in first.test_metrics:
        vals = [r.test_metrics[name] for r in records]
        mean, std = mean_std(vals) if len(vals) > 1 else (float(vals[0]), float("nan"))
        metrics[name] = {"mean": mean, "std": std, "values": vals, "display": format_pm(mean, std)}
    return _clean({
        "experiment": first.experiment,
        "dataset": first.dataset,
        "task": first.task,
        "model": first.model,
        "param_breakdown": first.param_breakdown,
        "seeds": [r.seed for r in records],
        "early_stops": [r.early_stop for r in records],
        "test_metrics": metrics,
        "schema_version": SCHEMA_VERSION,
    })


def multi_seed(dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig, seeds,
               experiment: str = "run", map_fn=map):
    """Run every seed and aggregate. ``map_fn`` may be a pool's ``map``."""
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ConfigurationError("multi_seed needs at least two seeds")
    records = list(map_fn(_SeedRun(dataset, model_config, train_config, experiment), seeds))
    return records, aggregate_records(records)


@dataclass
class _SeedRun:
    # Picklable callable so seeds can fan out to a process pool.
    dataset: Dataset
    model_config: ModelConfig
    train_config: TrainConfig
    experiment: str

    def __call__(self, seed):
        return train(self.dataset, self.model_config, self.train_config, seed, self.experiment)
