"""Model architectures built from per-token VQC blocks.

Inputs of ``f`` features are zero-padded to ``3T`` values with
``T = ceil(f / 3)`` and viewed as a ``(T, 3)`` token matrix; each token is
angle-embedded into its own 3-qubit block. Blocks of the same kind across
tokens are evaluated together by :func:`vqcbench.autodiff.vqc_block`.

Architectures
-------------
``fc_vqc``
    ``stages`` rounds of (per-token blocks, then token mixing), a per-token
    3->1 readout and a final ``T``-qubit block.
``resnet_vqc``
    As ``fc_vqc`` with an identity skip around every stage.
``qt``
    Quantum Q/K/V blocks per head, classical softmax attention, output
    projection, LayerNorm, a quantum FFN, LayerNorm, readout.
``fqt``
    Per-token stem, quantum attention (token matrix transposed so each
    feature row is entangled across tokens in a ``T``-qubit block), residual,
    quantum FFN, residual, readout.
``mlp``
    Classical tanh MLP used as a parameter-matched baseline.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from . import autodiff as ad
from .engine import BlockSpec
from .exceptions import ConfigurationError

ARCHITECTURES = ("fc_vqc", "resnet_vqc", "qt", "fqt", "mlp")
TASKS = ("regression", "classification")
CONNECTIVITIES = ("type4", "type3")
COMPONENTS = ("vqc", "attention", "ln_proj")
TOKEN_WIDTH = 3


# --- tokens and mixing ------------------------------------------------------

def n_tokens(n_feat: int) -> int:
    if n_feat < 1:
        raise ConfigurationError("need at least one feature")
    return math.ceil(n_feat / TOKEN_WIDTH)


def tokenize(x, n_feat: int | None = None) -> np.ndarray:
    """Zero-pad the last axis to a multiple of 3 and reshape to ``(..., T, 3)``."""
    x = np.asarray(x, dtype=float)
    if n_feat is not None and x.shape[-1] != n_feat:
        raise ConfigurationError(f"expected {n_feat} features, got {x.shape[-1]}")
    T = n_tokens(x.shape[-1])
    pad = [(0, 0)] * (x.ndim - 1) + [(0, TOKEN_WIDTH * T - x.shape[-1])]
    return np.pad(x, pad).reshape(x.shape[:-1] + (T, TOKEN_WIDTH))


def type4_permutation(T: int) -> np.ndarray:
    # Flat output index k reads M.T.ravel()[k], i.e. entry M[k % T, k // T].
    k = np.arange(TOKEN_WIDTH * T)
    return (k % T) * TOKEN_WIDTH + k // T


def type3_permutation(T: int) -> np.ndarray:
    t = np.arange(T)
    perm = np.empty((T, TOKEN_WIDTH), dtype=int)
    perm[:, 0] = ((t - 1) % T) * TOKEN_WIDTH + 2
    perm[:, 1] = t * TOKEN_WIDTH + 1
    perm[:, 2] = ((t + 1) % T) * TOKEN_WIDTH
    return perm.reshape(-1)


def mixing_permutation(kind: str, T: int) -> np.ndarray:
    if kind == "type4":
        return type4_permutation(T)
    if kind == "type3":
        return type3_permutation(T)
    raise ConfigurationError(f"unknown connectivity {kind!r}")


def type4_mix(M) -> np.ndarray:
    """Transpose ``(T, 3)`` to ``(3, T)``, flatten, re-chunk into ``T`` rows of 3."""
    M = np.asarray(M)
    T = M.shape[-2]
    flat = M.reshape(M.shape[:-2] + (-1,))
    return flat[..., type4_permutation(T)].reshape(M.shape)


def type3_shift(M) -> np.ndarray:
    """Row ``t`` becomes ``(M[t-1, 2], M[t, 1], M[t+1, 0])`` with circular indexing."""
    M = np.asarray(M)
    T = M.shape[-2]
    flat = M.reshape(M.shape[:-2] + (-1,))
    return flat[..., type3_permutation(T)].reshape(M.shape)


# --- configuration ----------------------------------------------------------

def mlp_param_count(n_in: int, hidden, n_out: int) -> int:
    sizes = [n_in, *hidden, n_out]
    return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))


def search_mlp_hidden(n_in: int, n_out: int, target: int, max_layers: int = 1, max_width: int = 256):
    """Hidden sizes whose parameter count is closest to ``target``.

    Exhaustive over 1..``max_layers`` hidden layers of width 1..``max_width``;
    ties go to fewer layers, then to the lexicographically smaller widths.
    """
    best = None
    for n_layers in range(1, max_layers + 1):
        for hidden in product(range(1, max_width + 1), repeat=n_layers):
            key = (abs(mlp_param_count(n_in, hidden, n_out) - target), n_layers, hidden)
            if best is None or key < best:
                best = key
    return tuple(best[2])


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``None`` fields take architecture defaults (see :meth:`resolved`):
    ``layernorm`` is on for ``qt`` and off otherwise; ``ffn_stages`` is 4 for
    ``qt`` and 3 for ``fqt``; ``final_depth`` is the block depth for
    regression and 0 (no final block) for classification, except ``qt`` which
    uses a depth-1 final block for both tasks.
    """

    architecture: str = "fc_vqc"
    n_features: int = 13
    task: str = "regression"
    n_classes: int = 1
    depth: int = 3
    heads: int = 1
    connectivity: str = "type4"
    layernorm: bool | None = None
    attention: bool = True
    stages: int = 4
    ffn_stages: int | None = None
    final_depth: int | None = None
    readout_skip: bool = False
    hidden_sizes: tuple | None = None
    mlp_target: int = 720

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.connectivity not in CONNECTIVITIES:
            raise ConfigurationError(f"connectivity must be one of {CONNECTIVITIES}, got {self.connectivity!r}")
        if self.n_features < 1:
            raise ConfigurationError("n_features must be >= 1")
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")
        if self.heads < 1:
            raise ConfigurationError("heads must be >= 1")
        if self.stages < 0 or (self.ffn_stages is not None and self.ffn_stages < 0):
            raise ConfigurationError("stage counts must be >= 0")
        if self.final_depth is not None and self.final_depth < 0:
            raise ConfigurationError("final_depth must be >= 0")
        if self.task == "classification" and self.n_classes < 2:
            raise ConfigurationError("classification needs n_classes >= 2")
        if self.task == "regression" and self.n_classes != 1:
            raise ConfigurationError("regression uses n_classes = 1")
        if self.hidden_sizes is not None and any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigurationError("hidden sizes must be >= 1")

    @property
    def n_tokens(self) -> int:
        return n_tokens(self.n_features)

    @property
    def n_outputs(self) -> int:
        return 1 if self.task == "regression" else self.n_classes

    def resolved(self) -> "ModelConfig":
        arch = self.architecture
        layernorm = self.layernorm if self.layernorm is not None else arch == "qt"
        ffn = self.ffn_stages if self.ffn_stages is not None else {"qt": 4, "fqt": 3}.get(arch, 0)
        if self.final_depth is not None:
            final = self.final_depth
        elif arch == "qt":
            final = 1
        else:
            final = self.depth if self.task == "regression" else 0
        hidden = self.hidden_sizes
        if arch == "mlp" and hidden is None:
            hidden = search_mlp_hidden(self.n_features, self.n_outputs, self.mlp_target)
        hidden = tuple(int(h) for h in hidden) if hidden is not None else None
        return ModelConfig(**{**asdict(self), "layernorm": layernorm, "ffn_stages": ffn,
                              "final_depth": final, "hidden_sizes": hidden})

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["hidden_sizes"] is not None:
            d["hidden_sizes"] = list(d["hidden_sizes"])
        return d


@dataclass(frozen=True)
class ParamEntry:
    name: str
    shape: tuple
    component: str
    init: str  # "angle", "uniform:<fan_in>", "ones", "zeros"

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ParamBreakdown:
    vqc_params: int
    attention_params: int
    ln_proj_params: int

    @property
    def total(self) -> int:
        return self.vqc_params + self.attention_params + self.ln_proj_params

    def to_dict(self) -> dict:
        return {"vqc": self.vqc_params, "attention": self.attention_params,
                "ln_proj": self.ln_proj_params, "total": self.total}


# --- model ------------------------------------------------------------------

@dataclass
class HybridModel:
    """Parameter layout and forward pass for one :class:`ModelConfig`."""

    config: ModelConfig
    entries: list = field(init=False)

    def __post_init__(self):
        self.config = self.config.resolved()
        self.entries = []
        getattr(self, f"_layout_{self.config.architecture}")()
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise AssertionError("duplicate parameter names")

    # layout helpers
    def _block(self, name, groups, n_qubits, depth, component="vqc"):
        self.entries.append(ParamEntry(name, (groups, depth, n_qubits, 3), component, "angle"))

    def _dense(self, name, n_in, n_out, component="ln_proj", bias=True):
        self.entries.append(ParamEntry(f"{name}.W", (n_in, n_out), component, f"uniform:{n_in}"))
        if bias:
            self.entries.append(ParamEntry(f"{name}.b", (n_out,), component, f"uniform:{n_in}"))

    def _ln(self, name, width):
        self.entries.append(ParamEntry(f"{name}.gain", (width,), "ln_proj", "ones"))
        self.entries.append(ParamEntry(f"{name}.bias", (width,), "ln_proj", "zeros"))

    def _readout_layout(self):
        c = self.config
        T = c.n_tokens
        self._block("readout", T, 3, c.depth)
        if c.final_depth > 0:
            self._block("final", 1, T, c.final_depth)
        if c.task == "classification":
            self._dense("head", T, c.n_classes)

    def _layout_fc_vqc(self):
        c = self.config
        for s in range(c.stages):
            self._block(f"stage{s}", c.n_tokens, 3, c.depth)
        if c.readout_skip:
            self._dense("readout_skip", 3 * c.n_tokens, c.n_tokens, bias=False)
        self._readout_layout()

    _layout_resnet_vqc = _layout_fc_vqc

    def _layout_qt(self):
        c = self.config
        T = c.n_tokens
        if c.attention:
            for h in range(c.heads):
                for role in "qkv":
                    self._block(f"head{h}.{role}", T, 3, c.depth, component="attention")
        # W_O is kept without attention so that -attn removes only the Q/K/V circuits
        self._dense("w_o", 3 * T * c.heads, 3 * T, bias=False)
        if c.layernorm:
            self._ln("ln1", 3 * T)
        for s in range(c.ffn_stages):
            self._block(f"ffn{s}", T, 3, c.depth)
        if c.layernorm:
            self._ln("ln2", 3 * T)
        self._readout_layout()

    def _layout_fqt(self):
        c = self.config
        T = c.n_tokens
        self._block("stem", T, 3, c.depth)
        if c.attention:
            for h in range(c.heads):
                self._block(f"qattn{h}", 3, T, c.depth, component="attention")
            if c.heads > 1:
                self._dense("merge", 3 * c.heads, 3, component="attention")
        if c.layernorm:
            self._ln("ln1", 3 * T)
        for s in range(c.ffn_stages):
            self._block(f"ffn{s}", T, 3, c.depth)
        if c.layernorm:
            self._ln("ln2", 3 * T)
        self._readout_layout()

    def _layout_mlp(self):
        c = self.config
        sizes = [c.n_features, *c.hidden_sizes, c.n_outputs]
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self._dense(f"dense{i}", a, b)

    # accounting
    def count_params(self) -> ParamBreakdown:
        totals = dict.fromkeys(COMPONENTS, 0)
        for e in self.entries:
            totals[e.component] += e.size
        return ParamBreakdown(totals["vqc"], totals["attention"], totals["ln_proj"])

    @property
    def n_params(self) -> int:
        return sum(e.size for e in self.entries)

    def init_params(self, rng: np.random.Generator) -> dict:
        params = {}
        for e in self.entries:
            if e.init == "angle":
                params[e.name] = rng.uniform(0.0, 2 * np.pi, size=e.shape)
            elif e.init.startswith("uniform:"):
                bound = 1.0 / math.sqrt(int(e.init.split(":")[1]))
                params[e.name] = rng.uniform(-bound, bound, size=e.shape)
            elif e.init == "ones":
                params[e.name] = np.ones(e.shape)
            else:
                params[e.name] = np.zeros(e.shape)
        return params

    def flatten(self, params: dict) -> np.ndarray:
        return np.concatenate([np.asarray(params[e.name], dtype=float).ravel() for e in self.entries])

    def unflatten(self, vector) -> dict:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.n_params,):
            raise ConfigurationError(f"expected {self.n_params} values, got {vector.shape}")
        out, start = {}, 0
        for e in self.entries:
            out[e.name] = vector[start:start + e.size].reshape(e.shape)
            start += e.size
        return out

    # forward
    def forward(self, params: dict, X, p_d: float = 0.0, trace: dict | None = None) -> ad.Var:
        """Map features ``(B, f)`` to predictions ``(B,)`` or logits ``(B, C)``.

        ``params`` values may be arrays or :class:`autodiff.Var`; arrays are
        wrapped as constants. When ``trace`` is a dict, intermediate values
        (for example attention weights) are stored in it.
        """
        c = self.config
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != c.n_features:
            raise ConfigurationError(f"expected inputs of shape (B, {c.n_features}), got {X.shape}")
        P = {k: v if isinstance(v, ad.Var) else ad.constant(v) for k, v in params.items()}
        missing = [e.name for e in self.entries if e.name not in P]
        if missing:
            raise ConfigurationError(f"missing parameters: {missing}")
        if c.architecture == "mlp":
            return self._forward_mlp(P, X)
        tokens = ad.constant(tokenize(X))
        fwd = getattr(self, f"_forward_{c.architecture}")
        return fwd(P, tokens, p_d, trace if trace is not None else {})

    def _blocks(self, P, name, z, p_d, measure=None):
        spec = BlockSpec(P[name].shape[2], P[name].shape[1], measure)
        return ad.vqc_block(z, P[name], spec, p_d)

    def _mix(self, z):
        B, T, w = z.shape
        flat = ad.reshape(z, (B, T * w))
        return ad.reshape(ad.permute_last(flat, mixing_permutation(self.config.connectivity, T)), (B, T, w))

    def _ln_tokens(self, P, name, z):
        B, T, w = z.shape
        out = ad.layer_norm(ad.reshape(z, (B, T * w)), P[f"{name}.gain"], P[f"{name}.bias"])
        return ad.reshape(out, (B, T, w))

    def _readout(self, P, z, p_d, skip=None):
        c = self.config
        B, T, _ = z.shape
        r = ad.reshape(self._blocks(P, "readout", z, p_d, measure=(0,)), (B, T))
        if skip is not None:
            r = ad.add(r, skip)
        if c.final_depth > 0:
            measure = (0,) if c.task == "regression" else None
            r = ad.reshape(self._blocks(P, "final", ad.reshape(r, (B, 1, T)), p_d, measure), (B, -1))
        if c.task == "classification":
            return ad.dense(r, P["head.W"], P["head.b"])
        return ad.reshape(r, (B,))

    def _forward_fc_vqc(self, P, z, p_d, trace):
        c = self.config
        for s in range(c.stages):
            out = self._blocks(P, f"stage{s}", z, p_d)
            if c.architecture == "resnet_vqc":
                out = ad.add(out, z)
            z = self._mix(out)
        skip = None
        if c.readout_skip:
            B, T, w = z.shape
            skip = ad.dense(ad.reshape(z, (B, T * w)), P["readout_skip.W"])
        return self._readout(P, z, p_d, skip)

    _forward_resnet_vqc = _forward_fc_vqc

    def _forward_qt(self, P, x, p_d, trace):
        c = self.config
        B, T, w = x.shape
        if c.attention:
            heads = []
            trace["attention"] = []
            for i in range(c.heads):
                q, k, v = (self._blocks(P, f"head{i}.{r}", x, p_d) for r in "qkv")
                out, alpha = ad.scaled_dot_attention(q, k, v, return_weights=True)
                trace["attention"].append(alpha)
                heads.append(out)
        else:
            # -attn: every head passes its tokens through unchanged
            heads = [x] * c.heads
        cat = heads[0] if c.heads == 1 else ad.concat(heads, axis=-1)
        a = ad.dense(ad.reshape(cat, (B, T * w * c.heads)), P["w_o.W"])
        h = ad.add(x, ad.reshape(a, (B, T, w)))
        if c.layernorm:
            h = self._ln_tokens(P, "ln1", h)
        y = self._ffn(P, h, p_d)
        if c.ffn_stages:
            y = ad.add(h, y)
        if c.layernorm:
            y = self._ln_tokens(P, "ln2", y)
        return self._readout(P, y, p_d)

    def _ffn(self, P, z, p_d):
        for s in range(self.config.ffn_stages):
            z = self._blocks(P, f"ffn{s}", self._mix(z), p_d)
        return z

    def _forward_fqt(self, P, x, p_d, trace):
        c = self.config
        B, T, w = x.shape
        stem = self._blocks(P, "stem", x, p_d)
        h = stem
        if c.attention:
            rows = ad.transpose(stem, (0, 2, 1))  # (B, 3, T): one T-qubit block per feature row
            branches = [ad.transpose(self._blocks(P, f"qattn{i}", rows, p_d), (0, 2, 1)) for i in range(c.heads)]
            if c.heads == 1:
                a = branches[0]
            else:
                a = ad.dense(ad.concat(branches, axis=-1), P["merge.W"], P["merge.b"])
            h = ad.add(stem, a)
        if c.layernorm:
            h = self._ln_tokens(P, "ln1", h)
        y = self._ffn(P, h, p_d)
        if c.ffn_stages:
            y = ad.add(h, y)
        if c.layernorm:
            y = self._ln_tokens(P, "ln2", y)
        return self._readout(P, y, p_d)

    def _forward_mlp(self, P, X):
        c = self.config
        z = ad.constant(X)
        n_layers = len(c.hidden_sizes) + 1
        for i in range(n_layers):
            z = ad.dense(z, P[f"dense{i}.W"], P[f"dense{i}.b"])
            if i < n_layers - 1:
                z = ad.tanh(z)
        if c.task == "regression":
            return ad.reshape(z, (X.shape[0],))
        return z


def build_model(config: ModelConfig | None = None, **kwargs) -> HybridModel:
    if config is None:
        config = ModelConfig(**kwargs)
    elif kwargs:
        config = ModelConfig(**{**asdict(config), **kwargs})
    return HybridModel(config)


def count_params(config: ModelConfig) -> ParamBreakdown:
    return HybridModel(config).count_params()
