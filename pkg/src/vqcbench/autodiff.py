"""Minimal reverse-mode differentiation over numpy arrays.

Every operation returns a :class:`Var`; calling :func:`backward` on a scalar
result walks the graph in reverse topological order and accumulates
``.grad`` on every ``Var`` that requires it. VQC blocks enter the graph via
:func:`vqc_block`, which delegates its vector-Jacobian product to
:class:`vqcbench.engine.BlockRun`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import BlockRun, BlockSpec
from .exceptions import ConfigurationError

LN_EPS = 1e-5


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "kind")

    def __init__(self, value, parents=(), backward=None, requires_grad=None, kind="op"):
        self.value = np.asarray(value, dtype=float)
        self._parents = tuple(parents)
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self._parents)
        self.requires_grad = requires_grad
        self.grad = None
        self.kind = kind

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(kind={self.kind}, shape={self.shape})"


def param(value) -> Var:
    return Var(value, requires_grad=True, kind="input")


def constant(value) -> Var:
    return Var(value, requires_grad=False, kind="constant")


def _accumulate(var: Var, g):
    if not var.requires_grad:
        return
    var.grad = g if var.grad is None else var.grad + g


def _topological(root: Var):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(root: Var):
    if root.value.size != 1:
        raise ConfigurationError("backward() needs a scalar output")
    root.grad = np.ones_like(root.value)
    for node in reversed(_topological(root)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# --- structural ops ---------------------------------------------------------

def add(a: Var, b: Var) -> Var:
    if a.shape != b.shape:
        raise ConfigurationError(f"add shape mismatch {a.shape} vs {b.shape}")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return Var(a.value + b.value, (a, b), bw, kind="add")


def reshape(a: Var, shape) -> Var:
    return Var(a.value.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(a.shape)), kind="reshape")


def transpose(a: Var, axes) -> Var:
    inv = np.argsort(axes)
    return Var(a.value.transpose(axes), (a,), lambda g: _accumulate(a, g.transpose(inv)), kind="transpose")


def permute_last(a: Var, perm) -> Var:
    """``out[..., k] = a[..., perm[k]]`` for a bijective ``perm``."""
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    return Var(a.value[..., perm], (a,), lambda g: _accumulate(a, g[..., inv]), kind="permute")


def select_last(a: Var, index: int) -> Var:
    def bw(g):
        full = np.zeros(a.shape)
        full[..., index] = g
        _accumulate(a, full)

    return Var(a.value[..., index], (a,), bw, kind="select")


def concat(vars_, axis: int = -1) -> Var:
    vars_ = list(vars_)
    sizes = np.cumsum([v.shape[axis] for v in vars_])[:-1]

    def bw(g):
        for v, part in zip(vars_, np.split(g, sizes, axis=axis)):
            _accumulate(v, part)

    return Var(np.concatenate([v.value for v in vars_], axis=axis), vars_, bw, kind="concat")


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return Var(out, (a,), lambda g: _accumulate(a, g * (1 - out**2)), kind="tanh")


# --- classical layers -------------------------------------------------------

def dense(x: Var, W: Var, b: Var | None = None) -> Var:
    """``x @ W + b`` over the last axis; ``W`` has shape ``(in, out)``."""
    if x.shape[-1] != W.shape[0] or (b is not None and b.shape != (W.shape[1],)):
        raise ConfigurationError(
            f"dense shape mismatch: x {x.shape}, W {W.shape}, b {None if b is None else b.shape}"
        )
    out = x.value @ W.value
    if b is not None:
        out = out + b.value

    def bw(g):
        _accumulate(x, g @ W.value.T)
        flat_x = x.value.reshape(-1, x.shape[-1])
        flat_g = g.reshape(-1, g.shape[-1])
        _accumulate(W, flat_x.T @ flat_g)
        if b is not None:
            _accumulate(b, flat_g.sum(axis=0))

    parents = (x, W) if b is None else (x, W, b)
    return Var(out, parents, bw, kind="dense")


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = LN_EPS) -> Var:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``bias``."""
    width = x.shape[-1]
    if width < 2:
        raise ConfigurationError("layer_norm needs at least two features")
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def bw(g):
        _accumulate(gain, (g * xhat).reshape(-1, width).sum(axis=0))
        _accumulate(bias, g.reshape(-1, width).sum(axis=0))
        gh = g * gain.value
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        _accumulate(x, gx)

    return Var(xhat * gain.value + bias.value, (x, gain, bias), bw, kind="layer_norm")


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def scaled_dot_attention(q: Var, k: Var, v: Var, return_weights: bool = False):
    """Softmax attention over the token axis; inputs are ``(..., T, w)``."""
    if not (q.shape[:-1] == k.shape[:-1] == v.shape[:-1]):
        raise ConfigurationError("q, k, v must share the token axis")
    scale = 1.0 / np.sqrt(q.shape[-1])
    alpha = softmax(q.value @ np.swapaxes(k.value, -1, -2) * scale)
    out = alpha @ v.value

    def bw(g):
        _accumulate(v, np.swapaxes(alpha, -1, -2) @ g)
        galpha = g @ np.swapaxes(v.value, -1, -2)
        gscore = alpha * (galpha - (galpha * alpha).sum(axis=-1, keepdims=True)) * scale
        _accumulate(q, gscore @ k.value)
        _accumulate(k, np.swapaxes(gscore, -1, -2) @ q.value)

    res = Var(out, (q, k, v), bw, kind="attention")
    return (res, alpha) if return_weights else res


# --- quantum node -----------------------------------------------------------

def vqc_block(x: Var, theta: Var, spec: BlockSpec, p_d: float = 0.0) -> Var:
    """Batched block evaluation: ``x`` is ``(B, G, n)``, ``theta`` is ``(G, d, n, 3)``."""
    run = BlockRun(x.value, theta.value, spec, p_d)

    def bw(g):
        gx, gtheta = run.backward(g)
        _accumulate(x, gx)
        _accumulate(theta, gtheta)

    return Var(run.output, (x, theta), bw, kind="vqc_block")


# --- losses -----------------------------------------------------------------

def mse_loss(pred: Var, target) -> Var:
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ConfigurationError(f"mse shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.value - target
    return Var(np.mean(diff**2), (pred,), lambda g: _accumulate(pred, g * 2.0 * diff / diff.size), kind="loss")


def cross_entropy_loss(logits: Var, labels) -> Var:
    """Mean softmax cross-entropy of ``(B, C)`` logits against integer labels."""
    labels = np.asarray(labels, dtype=int)
    if logits.value.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ConfigurationError("cross entropy expects (B, C) logits and (B,) labels")
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(labels.size)
    loss = -logp[rows, labels].mean()

    def bw(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        _accumulate(logits, g * p / labels.size)

    return Var(loss, (logits,), bw, kind="loss")


# --- optimisation -----------------------------------------------------------

def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_global_norm(grads, max_norm: float = 1.0):
    """Scale all gradients by ``max_norm / norm`` when their joint norm exceeds ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads]
    return list(grads)


@dataclass
class AdamState:
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kwargs)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update; returns new parameter arrays and mutates ``state``."""
    if len(state.m) != len(params):
        raise ConfigurationError("optimizer state does not match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        out.append(p - state.learning_rate * mhat / (np.sqrt(vhat) + state.epsilon))
    return out
