"""Full-batch training loop with best-validation checkpointing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .archs import HybridModel


@dataclass
class FitResult:
    best_params: dict
    final_params: dict
    best_epoch: int
    best_val_loss: float
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    early_stop: bool = False
    early_stop_epoch: int | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss) - 1


def _loss(model: HybridModel, out: ad.Var, y) -> ad.Var:
    if model.config.task == "regression":
        return ad.mse_loss(out, y)
    return ad.cross_entropy_loss(out, y)


def _usable(model, X, y):
    # Classes absent from training are encoded as -1 and cannot enter the loss.
    if model.config.task == "classification":
        keep = np.asarray(y) >= 0
        return X[keep], np.asarray(y)[keep]
    return X, y


def make_objective(model: HybridModel, X, y, p_d: float = 0.0):
    """Return ``params -> (loss, grads)`` over the full batch ``(X, y)``."""
    X, y = _usable(model, X, y)

    def objective(params):
        P = {k: ad.param(v) for k, v in params.items()}
        loss = _loss(model, model.forward(P, X, p_d=p_d), y)
        ad.backward(loss)
        grads = {k: (P[k].grad if P[k].grad is not None else np.zeros_like(v)) for k, v in params.items()}
        return float(loss.value), grads

    return objective


def evaluate_loss(model: HybridModel, params, X, y, p_d: float = 0.0) -> float:
    X, y = _usable(model, X, y)
    if len(y) == 0:
        return float("nan")
    return float(_loss(model, model.forward(params, X, p_d=p_d), y).value)


def _finite(loss, grads) -> bool:
    return bool(np.isfinite(loss)) and all(np.all(np.isfinite(g)) for g in grads.values())


def fit_full_batch(
    model: HybridModel,
    params: dict,
    X,
    y,
    X_val=None,
    y_val=None,
    epochs: int = 2000,
    learning_rate: float = 0.005,
    clip_norm: float | None = 1.0,
    p_d: float = 0.0,
    objective=None,
) -> FitResult:
    """Adam on the full training batch.

    Epoch 0 records the losses of the initial parameters; epoch ``e >= 1``
    records them after the ``e``-th update. The checkpoint with the lowest
    validation loss (training loss when no validation data is given) is
    kept, ties going to the earliest epoch. A non-finite loss or gradient
    stops training and is recorded as an early stop at that epoch.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    objective = objective or make_objective(model, X, y, p_d)
    names = [e.name for e in model.entries]
    params = {k: np.array(params[k], dtype=float) for k in names}
    state = ad.AdamState.for_params([params[k] for k in names], learning_rate=learning_rate)
    has_val = X_val is not None and len(X_val) > 0

    result = FitResult(best_params=params, final_params=params, best_epoch=0, best_val_loss=float("inf"))
    for epoch in range(epochs + 1):
        loss, grads = objective(params)
        val = evaluate_loss(model, params, X_val, y_val, p_d) if has_val else loss
        if not _finite(loss, grads) or not np.isfinite(val):
            result.early_stop = True
            result.early_stop_epoch = epoch
            result.train_loss.append(loss)
            result.val_loss.append(val)
            break
        result.train_loss.append(loss)
        result.val_loss.append(val)
        if val < result.best_val_loss:
            result.best_val_loss = val
            result.best_epoch = epoch
            result.best_params = params
        if epoch == epochs:
            break
        g = [grads[k] for k in names]
        if clip_norm is not None:
            g = ad.clip_global_norm(g, clip_norm)
        new = ad.adam_step([params[k] for k in names], g, state)
        params = dict(zip(names, new))
    result.final_params = params
    return result
