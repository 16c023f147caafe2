import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqcbench.archs import ModelConfig
from vqcbench.datapipe import load_dataset
from vqcbench.loop import make_objective
from vqcbench.schema import RUN_RECORD_SCHEMA, validate
from vqcbench.trainer import (
    RunRecord,
    TrainConfig,
    aggregate_records,
    evaluate_metrics,
    format_pm,
    mean_std,
    multi_seed,
    train,
)

SMALL = ModelConfig(architecture="fc_vqc", stages=1, final_depth=1)


@pytest.fixture(scope="module")
def boston():
    return load_dataset("boston")


def macro_f1_oracle(pred, truth):
    scores = []
    for c in sorted(set(pred) | set(truth)):
        tp = sum(p == c and t == c for p, t in zip(pred, truth))
        fp = sum(p == c and t != c for p, t in zip(pred, truth))
        fn = sum(p != c and t == c for p, t in zip(pred, truth))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / len(scores)


class TestMetrics:
    def test_regression_against_loops(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 40))
            t, p = rng.normal(size=n), rng.normal(size=n)
            mean = sum(t) / n
            ss_res = sum((a - b) ** 2 for a, b in zip(t, p))
            ss_tot = sum((a - mean) ** 2 for a in t)
            m = evaluate_metrics(p, t, "regression")
            assert m["r2"] == pytest.approx(1 - ss_res / ss_tot, rel=1e-9)
            assert m["rmse"] == pytest.approx((ss_res / n) ** 0.5, rel=1e-9)
            assert m["mae"] == pytest.approx(sum(abs(a - b) for a, b in zip(t, p)) / n, rel=1e-9)

    def test_classification_against_loops(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 40))
            t, p = rng.integers(0, 5, n), rng.integers(0, 5, n)
            m = evaluate_metrics(p, t, "classification")
            assert m["accuracy"] == pytest.approx(np.mean(t == p))
            assert m["macro_f1"] == pytest.approx(macro_f1_oracle(p.tolist(), t.tolist()))

    def test_r2_perfect_and_mean(self, rng):
        y = rng.normal(size=20)
        assert evaluate_metrics(y, y, "regression")["r2"] == 1.0
        assert evaluate_metrics(np.full(20, y.mean()), y, "regression")["r2"] == pytest.approx(0.0, abs=1e-12)

    def test_non_finite_predictions(self):
        m = evaluate_metrics(np.array([1.0, np.nan]), np.array([1.0, 2.0]), "regression")
        assert all(np.isnan(v) for v in m.values())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_metrics(np.zeros(3), np.zeros(4), "regression")


class TestAggregation:
    def test_mean_std_example(self):
        mean, std = mean_std([0.8, 0.8, 0.9])
        assert mean == pytest.approx(0.833333, abs=1e-6) and std == pytest.approx(0.057735, abs=1e-6)
        assert format_pm(mean, std) == "0.833±0.058"

    def test_identical_values(self):
        assert mean_std([0.5, 0.5]) == (0.5, 0.0)

    def test_single_value_rejected(self):
        with pytest.raises(ValueError):
            mean_std([1.0])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=10))
    @settings(max_examples=50)
    def test_std_oracle(self, vals):
        n = len(vals)
        m = sum(vals) / n
        _, std = mean_std(vals)
        assert std == pytest.approx((sum((v - m) ** 2 for v in vals) / (n - 1)) ** 0.5, rel=1e-9, abs=1e-9)

    def test_format_missing_std(self):
        assert format_pm(0.5, None) == "0.500"
        assert format_pm(float("nan"), 0.1) == "nan"


class TestTrain:
    def test_zero_epochs(self, boston):
        rec = train(boston, SMALL, TrainConfig(epochs=0), seed=0)
        assert len(rec.train_loss) == 1 and rec.best_epoch == 0 and not rec.early_stop
        assert rec.split_sizes == {"train": 354, "val": 75, "test": 77, "train_used": 354}
        validate(json.loads(rec.to_json()), RUN_RECORD_SCHEMA)

    def test_best_epoch_is_validation_minimum(self, boston):
        rec = train(boston, SMALL, TrainConfig(epochs=15), seed=1)
        assert len(rec.val_loss) == 16
        assert rec.best_epoch == int(np.argmin(rec.val_loss))
        assert rec.best_val_loss == min(rec.val_loss)

    def test_loss_decreases(self, boston):
        rec = train(boston, SMALL, TrainConfig(epochs=20), seed=0)
        assert rec.train_loss[-1] < rec.train_loss[0]

    def test_nan_injection(self, boston):
        def factory(model, X, y):
            inner = make_objective(model, X, y)
            calls = {"n": 0}

            def objective(params):
                loss, grads = inner(params)
                calls["n"] += 1
                if calls["n"] == 6:
                    return float("nan"), grads
                return loss, grads

            return objective

        rec = train(boston, SMALL, TrainConfig(epochs=20), seed=0, objective=factory)
        assert rec.early_stop and rec.early_stop_epoch == 5
        assert len(rec.train_loss) == 6 and rec.train_loss[-1] != rec.train_loss[-1]
        assert rec.best_epoch < 5 and np.isfinite(rec.test_metrics["r2"])
        d = json.loads(rec.to_json())
        assert d["train_loss"][-1] is None
        validate(d, RUN_RECORD_SCHEMA)

    def test_deterministic_json(self, boston):
        a = train(boston, SMALL, TrainConfig(epochs=5), seed=4).to_json()
        b = train(boston, SMALL, TrainConfig(epochs=5), seed=4).to_json()
        assert a == b and "wall_clock" not in a

    def test_seed_changes_result(self, boston):
        a = train(boston, SMALL, TrainConfig(epochs=3), seed=0)
        b = train(boston, SMALL, TrainConfig(epochs=3), seed=1)
        assert a.test_metrics != b.test_metrics

    def test_round_trip(self, boston):
        rec = train(boston, SMALL, TrainConfig(epochs=2), seed=0)
        assert RunRecord.from_dict(rec.to_dict(include_timing=True)) == rec

    def test_multi_seed(self, boston):
        records, agg = multi_seed(boston, SMALL, TrainConfig(epochs=2), [0, 1, 2])
        assert [r.seed for r in records] == [0, 1, 2]
        vals = [r.test_metrics["r2"] for r in records]
        assert agg["test_metrics"]["r2"]["mean"] == pytest.approx(np.mean(vals))
        assert agg["test_metrics"]["r2"]["std"] == pytest.approx(np.std(vals, ddof=1))

    def test_identical_records_zero_std(self, boston):
        rec = train(boston, SMALL, TrainConfig(epochs=1), seed=0)
        agg = aggregate_records([rec, rec])
        assert agg["test_metrics"]["r2"]["std"] == 0.0
        assert aggregate_records([rec])["test_metrics"]["r2"]["std"] is None
