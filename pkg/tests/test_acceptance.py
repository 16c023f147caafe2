"""Acceptance criteria 1-10, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary; run with
``pytest tests/test_acceptance.py -v``.
"""
import csv
import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import kron_oracle_block
from vqcbench import autodiff as ad
from vqcbench.archs import ARCHITECTURES, HybridModel, ModelConfig, count_params, type3_shift, type4_mix
from vqcbench.cli import main
from vqcbench.config import load_config
from vqcbench.engine import BlockRun, BlockSpec
from vqcbench.noisesim import DensityMatrix, depolarize_qubit, run_block_noisy
from vqcbench.qgrad import adjoint_jacobian, parameter_shift_jacobian
from vqcbench.simcore import EntanglerSchedule, ParamBlock, StateVector, apply_block, embed_input, run_block
from vqcbench.trainer import evaluate_metrics

BOSTON = dict(n_features=13)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- 1. expressibility ------------------------------------------------------

@pytest.mark.criterion(1)
def test_c1_expressibility(tmp_path):
    start = time.perf_counter()
    rc = main(["expressibility", "--n-qubits", "3", "--samples", "10000", "--bins", "75", "--depths", "1-5",
               "--out", str(tmp_path)])
    elapsed = time.perf_counter() - start
    assert rc == 0
    rows = read_csv(tmp_path / "expressibility" / "summary.csv")
    kl = {int(r["depth"]): float(r["kl"]) for r in rows if r["depth"]}
    linear = next(float(r["kl"]) for r in rows if not r["depth"])
    print(f"KL by depth {kl}, linear {linear:.4f}, {elapsed:.1f}s")
    assert 0.15 <= kl[1] <= 0.25
    assert kl[2] <= 0.01
    assert all(kl[d] <= 0.008 for d in (3, 4, 5))
    assert all(abs(kl[d] - kl[d + 1]) <= 0.003 for d in (3, 4))
    assert linear >= 1.0 and linear >= 100 * kl[3]
    assert elapsed <= 120


# --- 2. gradients -----------------------------------------------------------

def _engine_jacobian(x, theta, spec):
    """Rows of d<Z_i>/d(theta, x) from the fused engine's reverse pass."""
    run = BlockRun(x[None, None], theta[None], spec)
    m = run.output.shape[-1]
    rows_t, rows_x = [], []
    for i in range(m):
        g = np.zeros((1, 1, m))
        g[0, 0, i] = 1.0
        gx, gth = run.backward(g)
        rows_t.append(gth[0].ravel())
        rows_x.append(gx[0, 0])
    return np.array(rows_t), np.array(rows_x)


def _loss(model, params, X, y):
    out = model.forward(params, X)
    return ad.mse_loss(out, y) if model.config.task == "regression" else ad.cross_entropy_loss(out, y)


@pytest.mark.criterion(2)
@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_c2_gradients(arch):
    rng = np.random.default_rng(2000 + ARCHITECTURES.index(arch))
    model = HybridModel(ModelConfig(architecture=arch, **BOSTON))
    block_entries = [e for e in model.entries if e.init == "angle"]
    worst_shift, worst_fd = 0.0, 0.0
    start = time.perf_counter()
    for _ in range(20):
        params = model.init_params(rng)
        # adjoint vs parameter shift on every block shape of the model
        seen = set()
        for e in block_entries:
            G, d, n, _ = e.shape
            if (n, d) in seen:
                continue
            seen.add((n, d))
            theta = params[e.name][rng.integers(G)]
            x = rng.normal(size=n)
            shift = parameter_shift_jacobian(x, ParamBlock(theta))
            adj = adjoint_jacobian(x, ParamBlock(theta))
            eng_t, eng_x = _engine_jacobian(x, theta, BlockSpec(n, d))
            worst_shift = max(worst_shift, np.max(np.abs(adj.matrix - shift.matrix)),
                              np.max(np.abs(eng_t - shift.wrt_params)), np.max(np.abs(eng_x - shift.wrt_inputs)))
        # end-to-end gradient vs central differences, h = 1e-4
        X, y = rng.normal(size=(4, 13)), rng.normal(size=4)
        P = {k: ad.param(v) for k, v in params.items()}
        ad.backward(_loss(model, P, X, y))
        grad = model.flatten({k: P[k].grad for k in params})
        vec = model.flatten(params)
        f = lambda v: _loss(model, model.unflatten(v), X, y).value
        h = 1e-4
        coords = rng.choice(vec.size, size=min(12, vec.size), replace=False)
        fd = np.array([(f(vec + h * np.eye(1, vec.size, j)[0]) - f(vec - h * np.eye(1, vec.size, j)[0])) / (2 * h)
                       for j in coords])
        worst_fd = max(worst_fd, np.linalg.norm(grad[coords] - fd) / np.linalg.norm(fd))
        direction = rng.normal(size=vec.size)
        dfd = (f(vec + h * direction) - f(vec - h * direction)) / (2 * h)
        worst_fd = max(worst_fd, abs(grad @ direction - dfd) / abs(dfd))
    print(f"{arch}: adjoint/shift {worst_shift:.2e}, fd rel {worst_fd:.2e}, {time.perf_counter() - start:.1f}s")
    assert worst_shift <= 1e-10
    assert worst_fd <= 1e-4


# --- 3. parameter accounting ------------------------------------------------

@pytest.mark.criterion(3)
def test_c3_param_accounting():
    qt = count_params(ModelConfig(architecture="qt", **BOSTON))
    fqt = count_params(ModelConfig(architecture="fqt", **BOSTON))
    assert qt.attention_params == 405 and fqt.attention_params == 135
    assert qt.total == 1380 and fqt.total == 855
    assert count_params(ModelConfig(architecture="fc_vqc", **BOSTON)).total == 720
    assert count_params(ModelConfig(architecture="resnet_vqc", **BOSTON)).total == 720
    for arch in ARCHITECTURES[:4]:
        model = HybridModel(ModelConfig(architecture=arch, **BOSTON))
        for e in model.entries:
            if e.init == "angle":
                G, d, n, three = e.shape
                assert three == 3 and e.size == G * 3 * n * d


# --- 4. desk-scale training -------------------------------------------------

@pytest.mark.criterion(4)
@pytest.mark.slow
def test_c4_desk_scale_training(tmp_path):
    cfg = load_config("boston_fc_vqc")
    assert cfg.seeds == [0, 1, 2] and cfg.train.epochs == 2000
    assert main(["train", "--config", "boston_fc_vqc", "--out", str(tmp_path)]) == 0
    agg = json.loads((tmp_path / "boston_fc_vqc" / "aggregate.json").read_text())
    r2 = agg["test_metrics"]["r2"]
    print(f"FC-VQC Boston test R2 {r2['display']} per seed {r2['values']}")
    assert r2["mean"] >= 0.60


# --- 5. noise channel -------------------------------------------------------

def _random_state(n, rng):
    a = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(n, a / np.linalg.norm(a))


@pytest.mark.criterion(5)
def test_c5_noise_channel():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = rng.uniform(0, 0.75)
        dm = DensityMatrix.from_state(_random_state(1, rng))
        z0 = dm.expect_z()[0]
        assert abs(depolarize_qubit(dm, 0, p).expect_z()[0] - (1 - 4 * p / 3) * z0) <= 1e-12
    for n, d in [(1, 2), (3, 3), (5, 1)]:
        x, params = rng.normal(size=n), ParamBlock.random(n, d, rng)
        assert np.max(np.abs(run_block_noisy(x, params, noise=0.0) - run_block(x, params))) <= 1e-10

    def audit(kind, rho):
        assert abs(np.trace(rho) - 1) <= 1e-12, kind
        assert np.max(np.abs(rho - rho.conj().T)) <= 1e-12, kind
        steps.append(kind)

    for p in (0.0, 0.01, 0.3):
        steps = []
        run_block_noisy(rng.normal(size=3), ParamBlock.random(3, 3, rng), noise=p, observer=audit)
        assert len(steps) == 3 * (9 + 3) + (9 if p > 0 else 0)


# --- 6. noise sweep ---------------------------------------------------------

@pytest.mark.criterion(6)
def test_c6_noise_sweep(tmp_path):
    cfg = load_config("boston_noise")
    assert cfg.noise_levels == [0.001, 0.01, 0.05] and cfg.noise_models == ["qt", "fqt"]
    assert main(["noise-sweep", "--config", "boston_noise", "--out", str(tmp_path)]) == 0
    root = tmp_path / "boston_noise"
    rows = read_csv(root / "table.csv")
    assert [(r["model"], float(r["p_d"])) for r in rows] == list(itertools.product(["qt", "fqt"], cfg.noise_levels))
    for model, p in itertools.product(["qt", "fqt"], cfg.noise_levels):
        for rec_path in (root / f"{model}_p{p:g}").glob("[0-9]*.json"):
            rec = json.loads(rec_path.read_text())
            finite = all(v is not None for v in rec["train_loss"] + rec["val_loss"])
            if not finite:
                assert rec["early_stop"] and rec["early_stop_epoch"] == len(rec["train_loss"]) - 1
            if model == "fqt":
                assert finite and not rec["early_stop"]
                assert len(rec["train_loss"]) == cfg.train.epochs + 1


# --- 7. ablation wiring -----------------------------------------------------

@pytest.mark.criterion(7)
@pytest.mark.parametrize("preset", ["boston_ablation", "boston_multihead"])
def test_c7_ablation_wiring(tmp_path, preset):
    cfg = load_config(preset)
    assert main(["train", "--config", preset, "--epochs", "1", "--seeds", "0", "--out", str(tmp_path)]) == 0
    assert main(["params", "--config", preset, "--out", str(tmp_path)]) == 0
    rows = {r["variant"]: r for r in read_csv(tmp_path / preset / "params.csv")}
    base = {}
    for variant in cfg.variants:
        mc = cfg.model_config(variant)
        b = count_params(mc)
        rec = json.loads((tmp_path / preset / variant / "0.json").read_text())
        assert rec["param_breakdown"] == b.to_dict()
        assert len(rec["train_loss"]) == 2
        assert int(rows[variant]["total"]) == b.total
        first = base.setdefault(mc.architecture, b)
        assert int(rows[variant]["delta_total"]) == b.total - first.total
        if not mc.attention:
            full = count_params(ModelConfig(**{**mc.to_dict(), "attention": True}))
            assert full.total - b.total == full.attention_params
    if preset == "boston_ablation":
        assert {"fqt_no_attn", "fqt_t3", "fqt_ln", "qt_no_attn", "qt_t3"} <= set(cfg.variants)
    else:
        assert sorted(cfg.model_config(v).heads for v in cfg.variants) == [1, 1, 2, 2, 3, 3]


# --- 8. metric oracles ------------------------------------------------------

def _f1_macro(pred, truth):
    labels = sorted(set(pred) | set(truth))
    total = 0.0
    for c in labels:
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, truth) if p != c and t == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        total += 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return total / len(labels)


@pytest.mark.criterion(8)
def test_c8_metric_oracles():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(2, 60))
        t, p = list(rng.normal(size=n)), list(rng.normal(size=n))
        mean = math.fsum(t) / n
        ss_res = math.fsum((a - b) ** 2 for a, b in zip(t, p))
        ss_tot = math.fsum((a - mean) ** 2 for a in t)
        m = evaluate_metrics(np.array(p), np.array(t), "regression")
        assert abs(m["r2"] - (1 - ss_res / ss_tot)) <= 1e-9
        assert abs(m["rmse"] - math.sqrt(ss_res / n)) <= 1e-9
        assert abs(m["mae"] - math.fsum(abs(a - b) for a, b in zip(t, p)) / n) <= 1e-9
        tc, pc = rng.integers(0, 6, n).tolist(), rng.integers(0, 6, n).tolist()
        c = evaluate_metrics(np.array(pc), np.array(tc), "classification")
        assert abs(c["accuracy"] - sum(a == b for a, b in zip(tc, pc)) / n) <= 1e-9
        assert abs(c["macro_f1"] - _f1_macro(pc, tc)) <= 1e-9
    y = rng.normal(size=30)
    assert evaluate_metrics(y, y, "regression")["r2"] == 1.0
    assert abs(evaluate_metrics(np.full(30, y.mean()), y, "regression")["r2"]) <= 1e-12


# --- 9. structural oracles --------------------------------------------------

@pytest.mark.criterion(9)
def test_c9_structural_oracles():
    rng = np.random.default_rng(9)
    M = rng.normal(size=(3, 3))
    assert np.array_equal(type4_mix(type4_mix(M)), M)
    for T in range(1, 9):
        flat = type3_shift(np.arange(3 * T).reshape(T, 3)).ravel()
        assert sorted(flat) == list(range(3 * T))
    model = HybridModel(ModelConfig(architecture="qt", heads=3, **BOSTON))
    trace = {}
    model.forward(model.init_params(rng), 2 * rng.normal(size=(6, 13)), trace=trace)
    for alpha in trace["attention"]:
        assert np.max(np.abs(alpha.sum(axis=-1) - 1)) <= 1e-12
    for n in (1, 2, 3):
        for d in (1, 2, 3, 4):
            x, p = rng.normal(size=n), ParamBlock.random(n, d, rng)
            sched = EntanglerSchedule.default(n, d)
            got = apply_block(embed_input(x), p, sched).amplitudes
            assert np.max(np.abs(got - kron_oracle_block(x, p.angles, sched.offsets))) <= 1e-10


# --- 10. determinism --------------------------------------------------------

@pytest.mark.criterion(10)
def test_c10_determinism(tmp_path):
    for out in ("first", "second"):
        assert main(["train", "--config", "boston_main", "--epochs", "3", "--seeds", "7",
                     "--out", str(tmp_path / out)]) == 0
    files = sorted(p.relative_to(tmp_path / "first") for p in (tmp_path / "first").rglob("*.json"))
    assert len(files) == 10
    for rel in files:
        assert (tmp_path / "first" / rel).read_bytes() == (tmp_path / "second" / rel).read_bytes(), rel
