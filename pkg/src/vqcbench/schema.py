"""JSON schemas of the emitted records."""
from __future__ import annotations

import jsonschema

_NUM = {"type": ["number", "null"]}
_LOSSES = {"type": "array", "items": _NUM}

RUN_RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RunRecord",
    "type": "object",
    "required": [
        "schema_version", "experiment", "dataset", "task", "seed", "model", "train",
        "param_breakdown", "split_sizes", "train_loss", "val_loss", "best_epoch",
        "best_val_loss", "early_stop", "early_stop_epoch", "test_metrics", "val_metrics",
    ],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": 1},
        "experiment": {"type": "string"},
        "dataset": {"type": "string"},
        "task": {"enum": ["regression", "classification"]},
        "seed": {"type": "integer"},
        "model": {"type": "object", "required": ["architecture", "depth", "heads"]},
        "train": {"type": "object", "required": ["epochs", "learning_rate", "clip_norm", "noise"]},
        "param_breakdown": {
            "type": "object",
            "required": ["vqc", "attention", "ln_proj", "total"],
            "additionalProperties": {"type": "integer", "minimum": 0},
        },
        "split_sizes": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "train_loss": _LOSSES,
        "val_loss": _LOSSES,
        "best_epoch": {"type": "integer", "minimum": 0},
        "best_val_loss": _NUM,
        "early_stop": {"type": "boolean"},
        "early_stop_epoch": {"type": ["integer", "null"]},
        "test_metrics": {"type": "object", "additionalProperties": _NUM},
        "val_metrics": {"type": "object", "additionalProperties": _NUM},
    },
}

_STAT = {
    "type": "object",
    "required": ["mean", "std", "values", "display"],
    "properties": {"mean": _NUM, "std": _NUM, "values": {"type": "array", "items": _NUM},
                   "display": {"type": "string"}},
}

AGGREGATE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Aggregate",
    "type": "object",
    "required": ["schema_version", "experiment", "dataset", "task", "model", "param_breakdown",
                 "seeds", "early_stops", "test_metrics"],
    "properties": {
        "schema_version": {"const": 1},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "early_stops": {"type": "array", "items": {"type": "boolean"}},
        "test_metrics": {"type": "object", "additionalProperties": _STAT},
    },
}

EXPRESSIBILITY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExpressibilityReport",
    "type": "object",
    "required": ["label", "n_qubits", "depth", "n_samples", "n_bins", "seed", "histogram", "haar", "kl",
                 "mean_fidelity"],
    "properties": {
        "n_qubits": {"type": "integer", "minimum": 1},
        "depth": {"type": ["integer", "null"]},
        "histogram": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "haar": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "kl": {"type": "number", "minimum": 0},
    },
}


def validate(instance: dict, schema: dict) -> None:
    jsonschema.validate(instance, schema)
