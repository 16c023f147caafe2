"""Command-line entry point: ``vqcbench <command> [options]``.

Commands: ``train``, ``noise-sweep``, ``expressibility``, ``params``,
``report``, ``fetch-data``. Exit codes: 0 success, 2 configuration error,
3 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import jsonschema
from threadpoolctl import threadpool_limits

from . import __version__
from .archs import ARCHITECTURES, ModelConfig, count_params
from .config import ExperimentConfig, load_config, parse_seeds, preset_names
from .datapipe import dataset_names, fetch_dataset, load_dataset, load_manifest
from .exceptions import ConfigurationError, DataError
from .expressibility import expressibility_report, linear_baseline_report
from .schema import AGGREGATE_SCHEMA, EXPRESSIBILITY_SCHEMA, RUN_RECORD_SCHEMA, validate
from .trainer import (
    CLASSIFICATION_METRICS,
    REGRESSION_METRICS,
    _SeedRun,
    aggregate_records,
    format_pm,
)

log = logging.getLogger("vqcbench")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
HIGHER_IS_BETTER = {"r2": True, "accuracy": True, "macro_f1": True, "rmse": False, "mae": False}
METRIC_LABELS = {"r2": "R2", "rmse": "RMSE", "mae": "MAE", "accuracy": "Accuracy", "macro_f1": "Macro-F1"}


# --- output helpers ---------------------------------------------------------

def write_json(path: Path, obj: dict, schema: dict | None = None) -> None:
    if schema is not None:
        validate(obj, schema)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "nan"
    return repr(float(v)) if isinstance(v, float) else str(v)


def markdown_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def results_table(aggregates):
    """Markdown text and CSV rows for a list of aggregate dicts of one task.

    The best mean in each metric column is rendered in bold.
    """
    if not aggregates:
        return markdown_table(["Model", "Dataset", "#p"], []), ["model", "dataset", "params"], []
    task = aggregates[0]["task"]
    metrics = REGRESSION_METRICS if task == "regression" else CLASSIFICATION_METRICS
    best = {}
    for m in metrics:
        means = [a["test_metrics"][m]["mean"] for a in aggregates if a["test_metrics"].get(m, {}).get("mean") is not None]
        if means:
            best[m] = max(means) if HIGHER_IS_BETTER[m] else min(means)
    md_rows, csv_rows = [], []
    for a in aggregates:
        n_params = count_params(ModelConfig(**_model_kwargs(a["model"]))).total
        cells = [a["experiment"], a["dataset"], str(n_params)]
        row = [a["experiment"], a["dataset"], n_params]
        for m in metrics:
            stat = a["test_metrics"].get(m, {})
            text = format_pm(stat.get("mean"), stat.get("std"))
            if stat.get("mean") is not None and stat.get("mean") == best.get(m):
                text = f"**{text}**"
            cells.append(text)
            row += [_num(stat.get("mean")), _num(stat.get("std"))]
        md_rows.append(cells)
        csv_rows.append(row)
    md = markdown_table(["Model", "Dataset", "#p"] + [METRIC_LABELS[m] for m in metrics], md_rows)
    csv_header = ["model", "dataset", "params"] + [f"{m}_{s}" for m in metrics for s in ("mean", "std")]
    return md, csv_header, csv_rows


def _model_kwargs(model: dict) -> dict:
    kw = dict(model)
    if kw.get("hidden_sizes") is not None:
        kw["hidden_sizes"] = tuple(kw["hidden_sizes"])
    return kw


# --- shared run logic -------------------------------------------------------

def _limit_threads():
    threadpool_limits(1)


def run_seeds(job: _SeedRun, seeds, threads: int):
    """Run ``job`` for every seed, fanning out to processes when ``threads > 1``."""
    if threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(seeds)), initializer=_limit_threads) as pool:
            return list(pool.map(job, seeds))
    with threadpool_limits(max(threads, 1)):
        return [job(s) for s in seeds]


def write_experiment(exp_dir: Path, records) -> dict:
    """Per-seed records, aggregate, one-row tables, timing and loss curves."""
    for r in records:
        write_json(exp_dir / f"{r.seed}.json", r.to_dict(), RUN_RECORD_SCHEMA)
    agg = aggregate_records(records)
    write_json(exp_dir / "aggregate.json", agg, AGGREGATE_SCHEMA)
    md, header, rows = results_table([agg])
    (exp_dir / "table.md").write_text(md, encoding="utf-8")
    write_csv(exp_dir / "table.csv", header, rows)
    write_csv(exp_dir / "timing.csv", ["seed", "wall_clock_seconds"],
              [[r.seed, f"{r.wall_clock_seconds:.3f}"] for r in records])
    curves = []
    for r in records:
        for epoch, (tl, vl) in enumerate(zip(r.train_loss, r.val_loss)):
            curves.append([r.seed, epoch, _num(tl), _num(vl)])
    write_csv(exp_dir / "loss_curves.csv", ["seed", "epoch", "train_loss", "val_loss"], curves)
    return agg


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seeds is not None:
        cfg.seeds = parse_seeds(args.seeds)
    if args.epochs is not None:
        if args.epochs < 0:
            raise ConfigurationError("--epochs must be >= 0")
        cfg.train = replace(cfg.train, epochs=args.epochs)
    if args.out is not None:
        cfg.out = args.out
    if args.threads < 1:
        raise ConfigurationError("--threads must be >= 1")
    return cfg


def _require_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigurationError(f"--config is required (a path or one of the presets {preset_names()})")
    return _apply_overrides(load_config(args.config), args)


def _require_dataset(cfg: ExperimentConfig):
    if cfg.dataset is None:
        raise ConfigurationError("[experiment] dataset: required for this command")
    cfg.dataset_entry()


# --- commands ---------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _require_config(args)
    _require_dataset(cfg)
    if not cfg.variants:
        raise ConfigurationError("[model]: no model configured")
    dataset = load_dataset(cfg.dataset, data_dir=args.data_dir)
    root = Path(cfg.out) / cfg.name
    aggregates = []
    for variant in cfg.variants:
        mc = cfg.model_config(variant)
        exp = cfg.name if len(cfg.variants) == 1 else f"{cfg.name}/{variant}"
        exp_dir = root if len(cfg.variants) == 1 else root / variant
        log.info("training %s on %s, seeds %s, %d epochs", exp, cfg.dataset, cfg.seeds, cfg.train.epochs)
        records = run_seeds(_SeedRun(dataset, mc, cfg.train, exp), cfg.seeds, args.threads)
        aggregates.append(write_experiment(exp_dir, records))
    if len(aggregates) > 1:
        md, header, rows = results_table(aggregates)
        (root / "table.md").write_text(md, encoding="utf-8")
        write_csv(root / "table.csv", header, rows)
    for a in aggregates:
        print(f"{a['experiment']}: " + ", ".join(f"{k}={v['display']}" for k, v in a["test_metrics"].items()))
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    cfg = _require_config(args)
    _require_dataset(cfg)
    if not cfg.noise_levels:
        raise ConfigurationError("[noise] levels: at least one level is required")
    dataset = load_dataset(cfg.dataset, data_dir=args.data_dir)
    root = Path(cfg.out) / cfg.name
    header = ["model", "p_d", "r2_mean", "r2_std", "early_stop", "early_stop_epochs", "all_losses_finite", "seeds"]
    rows, md_rows = [], []
    for model in cfg.noise_models:
        mc = cfg.model_config(model) if model in cfg.variants else cfg_model(cfg, model)
        if mc.architecture != model:
            raise ConfigurationError(f"[model:{model}] architecture: expected {model!r}, got {mc.architecture!r}")
        for p in cfg.noise_levels:
            exp = f"{cfg.name}/{model}_p{p:g}"
            log.info("noise sweep %s p_d=%g", model, p)
            tc = replace(cfg.train, noise=p)
            records = run_seeds(_SeedRun(dataset, mc, tc, exp), cfg.seeds, args.threads)
            agg = write_experiment(root / f"{model}_p{p:g}", records)
            r2 = agg["test_metrics"].get("r2", {})
            stops = [r.early_stop_epoch for r in records if r.early_stop]
            finite = all(
                v is not None and math.isfinite(v) for r in records for v in r.train_loss + r.val_loss
            )
            row = [model, repr(p), _num(r2.get("mean")), _num(r2.get("std")), any(r.early_stop for r in records),
                   ";".join(str(e) for e in stops), finite, ";".join(str(s) for s in cfg.seeds)]
            rows.append(row)
            md_rows.append([model, f"{p:g}", format_pm(r2.get("mean"), r2.get("std")),
                            "yes" if row[4] else "no", row[5] or "-"])
    write_csv(root / "table.csv", header, rows)
    (root / "table.md").write_text(
        markdown_table(["Model", "p_d", "R2", "Early stop", "Stop epoch"], md_rows), encoding="utf-8")
    print(markdown_table(["Model", "p_d", "R2", "Early stop", "Stop epoch"], md_rows), end="")
    return EXIT_OK


def cfg_model(cfg: ExperimentConfig, architecture: str) -> ModelConfig:
    entry = cfg.dataset_entry()
    return ModelConfig(architecture=architecture, n_features=len(entry["features"]), task=entry["task"],
                       n_classes=entry["n_classes"])


def cmd_expressibility(args) -> int:
    if args.config:
        cfg = _apply_overrides(load_config(args.config), args)
        ex, name, out = cfg.expressibility, cfg.name, cfg.out
    else:
        from .config import ExpressibilityConfig

        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        ex, name, out = ExpressibilityConfig(), "expressibility", args.out or "results"
    if args.n_qubits is not None:
        ex.n_qubits = args.n_qubits
    if args.depths is not None:
        ex.depths = parse_seeds(args.depths)
    if args.samples is not None:
        ex.samples = args.samples
    if args.bins is not None:
        ex.bins = args.bins
    if args.seeds is not None:
        ex.seed = parse_seeds(args.seeds)[0]
    if ex.n_qubits < 1 or ex.bins < 1 or any(d < 1 for d in ex.depths):
        raise ConfigurationError("n_qubits, bins and depths must be >= 1")
    root = Path(out) / name
    reports = []
    with threadpool_limits(args.threads):
        for d in ex.depths:
            reports.append(expressibility_report(ex.n_qubits, d, ex.samples, ex.bins, ex.seed))
        if ex.linear_baseline:
            reports.append(linear_baseline_report(ex.n_qubits, ex.samples, ex.bins, ex.seed))
    for r in reports:
        fname = f"depth{r.depth}.json" if r.depth is not None else "linear.json"
        write_json(root / fname, r.to_dict(), EXPRESSIBILITY_SCHEMA)
    header = ["label", "n_qubits", "depth", "n_samples", "n_bins", "seed", "kl", "mean_fidelity"]
    rows = [[r.label, r.n_qubits, "" if r.depth is None else r.depth, r.n_samples, r.n_bins, r.seed,
             repr(r.kl), repr(r.mean_fidelity)] for r in reports]
    write_csv(root / "summary.csv", header, rows)
    write_csv(root / "table.csv", header, rows)
    edges = [i / ex.bins for i in range(ex.bins + 1)]
    hist_header = ["bin_low", "bin_high", "haar"] + [r.label for r in reports]
    hist_rows = [[repr(edges[i]), repr(edges[i + 1]), repr(reports[0].haar[i])] + [repr(r.histogram[i]) for r in reports]
                 for i in range(ex.bins)]
    write_csv(root / "histograms.csv", hist_header, hist_rows)
    md = markdown_table(["Circuit", "KL"], [[r.label, f"{r.kl:.4f}"] for r in reports])
    (root / "table.md").write_text(md, encoding="utf-8")
    print(md, end="")
    return EXIT_OK


def cmd_params(args) -> int:
    if args.config:
        cfg = _require_config(args)
        _require_dataset(cfg)
        items = [(v, cfg.model_config(v)) for v in cfg.variants] or [
            (a, cfg_model(cfg, a)) for a in ARCHITECTURES]
        name, out = cfg.name, cfg.out
    else:
        entry = load_manifest()["boston"]
        items = [(a, ModelConfig(architecture=a, n_features=len(entry["features"]))) for a in ARCHITECTURES]
        name, out = "params", args.out
    header = ["variant", "architecture", "vqc", "attention", "ln_proj", "total", "delta_total"]
    rows = []
    base_total = {}  # delta is taken against the first variant of the same architecture
    for variant, mc in items:
        b = count_params(mc)
        base = base_total.setdefault(mc.architecture, b.total)
        rows.append([variant, mc.architecture, b.vqc_params, b.attention_params, b.ln_proj_params, b.total,
                     b.total - base])
    md = markdown_table(["Variant", "Arch", "VQC", "Attention", "LN/Proj", "Total", "Delta"], rows)
    print(md, end="")
    if out is not None:
        root = Path(out) / name
        write_csv(root / "params.csv", header, rows)
        root.mkdir(parents=True, exist_ok=True)
        (root / "params.md").write_text(md, encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    results_dir = Path(args.results_dir or args.out or "results")
    paths = sorted(results_dir.rglob("aggregate.json")) if results_dir.exists() else []
    if not paths:
        log.warning("no aggregate.json files under %s; writing an empty table", results_dir)
    aggregates = []
    for p in paths:
        try:
            agg = json.loads(p.read_text(encoding="utf-8"))
            validate(agg, AGGREGATE_SCHEMA)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            log.warning("skipping %s: %s", p, exc)
            continue
        aggregates.append(agg)
    sections, long_rows = [], []
    for task in ("regression", "classification"):
        group = [a for a in aggregates if a["task"] == task]
        if not group:
            continue
        md, _, _ = results_table(group)
        sections.append(f"### {task}\n\n{md}")
        for a in group:
            n_params = count_params(ModelConfig(**_model_kwargs(a["model"]))).total
            for m, stat in a["test_metrics"].items():
                long_rows.append([a["experiment"], a["dataset"], task, n_params, m, _num(stat["mean"]),
                                  _num(stat["std"]), len(a["seeds"])])
    text = "\n".join(sections) if sections else markdown_table(["Model", "Dataset", "#p"], [])
    results_dir.mkdir(parents=True, exist_ok=True)
    (results_dir / "table.md").write_text(text, encoding="utf-8")
    write_csv(results_dir / "table.csv", ["model", "dataset", "task", "params", "metric", "mean", "std", "n_seeds"],
              long_rows)
    print(text, end="")
    return EXIT_OK


def cmd_fetch_data(args) -> int:
    names = args.names or dataset_names()
    for n in names:
        if n not in dataset_names():
            raise ConfigurationError(f"unknown dataset {n!r}; known: {dataset_names()}")
    failed = []
    for n in names:
        try:
            path = fetch_dataset(n, data_dir=args.data_dir, force=args.force)
            print(f"{n}: {path}")
        except DataError as exc:
            log.error("%s", exc)
            failed.append(n)
    if failed:
        raise DataError(f"could not fetch {failed}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config path or preset name")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seeds", help="comma list or range, e.g. 0,1,2 or 0-4")
    common.add_argument("--epochs", type=int, help="training epochs (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for seeds / BLAS threads")
    common.add_argument("--data-dir", help="directory holding fetched datasets")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vqcbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train every model variant of a config").set_defaults(func=cmd_train)
    sub.add_parser("noise-sweep", parents=[common], help="train QT/FQT under depolarizing noise").set_defaults(
        func=cmd_noise_sweep)
    p = sub.add_parser("expressibility", parents=[common], help="KL divergence from Haar per depth")
    p.add_argument("--n-qubits", type=int)
    p.add_argument("--depths", help="e.g. 1-5 or 1,3")
    p.add_argument("--samples", type=int)
    p.add_argument("--bins", type=int)
    p.set_defaults(func=cmd_expressibility)
    sub.add_parser("params", parents=[common], help="parameter breakdown per variant").set_defaults(func=cmd_params)
    p = sub.add_parser("report", parents=[common], help="tables from aggregate.json files")
    p.add_argument("results_dir", nargs="?")
    p.set_defaults(func=cmd_report)
    p = sub.add_parser("fetch-data", parents=[common], help="download datasets into the data directory")
    p.add_argument("names", nargs="*")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fetch_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
