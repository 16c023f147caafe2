"""Experiment configuration files.

Configs are INI files read with :mod:`configparser`::

    [experiment]
    name = boston_main
    dataset = boston
    seeds = 0, 1, 2

    [model]              ; defaults shared by every variant
    depth = 3

    [model:fc_vqc]       ; one experiment per variant section
    architecture = fc_vqc

    [train]
    epochs = 2000

    [noise]
    levels = 0.001, 0.01, 0.05
    models = qt, fqt

    [expressibility]
    n_qubits = 3
    depths = 1, 2, 3, 4, 5

With no ``[model:...]`` sections the ``[model]`` section is the single
variant, named after its architecture. Unknown sections or keys are
configuration errors naming the offending field.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .archs import ARCHITECTURES, ModelConfig
from .datapipe import load_manifest
from .exceptions import ConfigurationError
from .noisesim import check_probability
from .trainer import TrainConfig

MODEL_KEYS = {
    "architecture": str, "depth": int, "heads": int, "connectivity": str, "layernorm": "optbool",
    "attention": bool, "stages": int, "ffn_stages": "optint", "final_depth": "optint",
    "readout_skip": bool, "hidden_sizes": "intlist", "mlp_target": int,
}
TRAIN_KEYS = {"epochs": int, "learning_rate": float, "clip_norm": float, "subsample": "optint"}
SECTIONS = {"experiment", "model", "train", "noise", "expressibility", "output"}
_NONE = {"", "none", "auto", "default"}


def _parse(section: str, key: str, raw: str, kind):
    text = raw.strip()
    where = f"[{section}] {key}"
    try:
        if kind is str:
            return text
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is bool:
            return _bool(text)
        if kind == "optint":
            return None if text.lower() in _NONE else int(text)
        if kind == "optbool":
            return None if text.lower() in _NONE else _bool(text)
        if kind == "intlist":
            return None if text.lower() in _NONE else tuple(int(v) for v in text.split(","))
        if kind == "floatlist":
            return [float(v) for v in text.split(",") if v.strip()]
        if kind == "strlist":
            return [v.strip() for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {raw!r}") from None
    raise AssertionError(kind)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in {"1", "true", "yes", "on"}:
        return True
    if low in {"0", "false", "no", "off"}:
        return False
    raise ValueError(text)


def parse_seeds(text: str) -> list[int]:
    """``"0,1,2"`` or a range ``"0-4"``."""
    text = text.strip()
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(v) for v in text.split("-"))
            seeds = list(range(lo, hi + 1))
        else:
            seeds = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"seeds: cannot parse {text!r}") from None
    if not seeds:
        raise ConfigurationError("seeds: at least one seed is required")
    return seeds


@dataclass
class ExpressibilityConfig:
    n_qubits: int = 3
    depths: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    samples: int = 10_000
    bins: int = 75
    seed: int = 0
    linear_baseline: bool = True


@dataclass
class ExperimentConfig:
    name: str
    dataset: str | None
    seeds: list
    variants: dict
    train: TrainConfig
    noise_levels: list = field(default_factory=list)
    noise_models: list = field(default_factory=lambda: ["qt", "fqt"])
    expressibility: ExpressibilityConfig = field(default_factory=ExpressibilityConfig)
    out: str = "results"

    def dataset_entry(self) -> dict:
        manifest = load_manifest()
        if self.dataset not in manifest:
            raise ConfigurationError(f"[experiment] dataset: unknown dataset {self.dataset!r}; known: {sorted(manifest)}")
        return manifest[self.dataset]

    def model_config(self, variant: str, **overrides) -> ModelConfig:
        entry = self.dataset_entry()
        kwargs = {**self.variants[variant], **overrides}
        task = entry["task"]
        try:
            return ModelConfig(n_features=len(entry["features"]), task=task,
                               n_classes=entry["n_classes"], **kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"[model:{variant}] {exc}") from None


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("vqcbench.presets").iterdir() if p.name.endswith(".ini"))


def resolve_config_path(ref: str) -> Path:
    """A filesystem path, or the name of a bundled preset (with or without ``.ini``)."""
    path = Path(ref)
    if path.exists():
        return path
    name = ref[:-4] if ref.endswith(".ini") else ref
    if name.startswith("preset:"):
        name = name[len("preset:"):]
    if name in preset_names():
        return Path(str(resources.files("vqcbench.presets").joinpath(f"{name}.ini")))
    raise ConfigurationError(f"config {ref!r} is neither a file nor a preset ({preset_names()})")


def _check_keys(section: str, items: dict, allowed):
    for key in items:
        if key not in allowed:
            raise ConfigurationError(f"[{section}] {key}: unknown key (allowed: {sorted(allowed)})")


def load_config(ref: str) -> ExperimentConfig:
    path = resolve_config_path(ref)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return config_from_parser(parser, default_name=path.stem)


def config_from_parser(parser: configparser.ConfigParser, default_name: str = "experiment") -> ExperimentConfig:
    for sec in parser.sections():
        if sec not in SECTIONS and not sec.startswith("model:"):
            raise ConfigurationError(f"[{sec}]: unknown section")

    exp = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    _check_keys("experiment", exp, {"name", "dataset", "seeds"})
    name = exp.get("name", default_name).strip()
    dataset = exp.get("dataset", "").strip() or None
    seeds = parse_seeds(exp.get("seeds", "0"))

    base = {}
    if parser.has_section("model"):
        items = dict(parser["model"])
        _check_keys("model", items, MODEL_KEYS)
        base = {k: _parse("model", k, v, MODEL_KEYS[k]) for k, v in items.items()}
    variants = {}
    for sec in parser.sections():
        if sec.startswith("model:"):
            vname = sec.split(":", 1)[1].strip()
            if not vname:
                raise ConfigurationError(f"[{sec}]: variant name is empty")
            items = dict(parser[sec])
            _check_keys(sec, items, MODEL_KEYS)
            variants[vname] = {**base, **{k: _parse(sec, k, v, MODEL_KEYS[k]) for k, v in items.items()}}
    if not variants and base:
        variants[base.get("architecture", "fc_vqc")] = base
    for vname, kw in variants.items():
        arch = kw.get("architecture", "fc_vqc")
        if arch not in ARCHITECTURES:
            raise ConfigurationError(f"[model:{vname}] architecture: unknown architecture {arch!r}")

    train_kw = {}
    if parser.has_section("train"):
        items = dict(parser["train"])
        _check_keys("train", items, TRAIN_KEYS)
        train_kw = {k: _parse("train", k, v, TRAIN_KEYS[k]) for k, v in items.items()}
    train = TrainConfig(**train_kw)

    levels, models = [], ["qt", "fqt"]
    if parser.has_section("noise"):
        items = dict(parser["noise"])
        _check_keys("noise", items, {"levels", "models"})
        levels = _parse("noise", "levels", items.get("levels", ""), "floatlist")
        for p in levels:
            try:
                check_probability(p)
            except ConfigurationError as exc:
                raise ConfigurationError(f"[noise] levels: {exc}") from None
        models = _parse("noise", "models", items.get("models", "qt, fqt"), "strlist")
        for m in models:
            if m not in ("qt", "fqt"):
                raise ConfigurationError(f"[noise] models: noise sweeps support qt and fqt, got {m!r}")

    ex = ExpressibilityConfig()
    if parser.has_section("expressibility"):
        items = dict(parser["expressibility"])
        kinds = {"n_qubits": int, "depths": "strlist", "samples": int, "bins": int, "seed": int,
                 "linear_baseline": bool}
        _check_keys("expressibility", items, kinds)
        for k, v in items.items():
            val = _parse("expressibility", k, v, kinds[k])
            if k == "depths":
                try:
                    val = [int(d) for d in val]
                except ValueError:
                    raise ConfigurationError(f"[expressibility] depths: cannot parse {v!r}") from None
            setattr(ex, k, val)
        if not ex.depths:
            raise ConfigurationError("[expressibility] depths: at least one depth is required")

    out = "results"
    if parser.has_section("output"):
        items = dict(parser["output"])
        _check_keys("output", items, {"dir"})
        out = items.get("dir", out).strip()

    cfg = ExperimentConfig(name, dataset, seeds, variants, train, levels, models, ex, out)
    if dataset is not None:
        cfg.dataset_entry()
    return cfg
