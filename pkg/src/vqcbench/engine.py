"""Vectorised block evaluation for training.

A block of ``n`` qubits and depth ``d`` is compiled into ``d`` layer
unitaries ``U_l = P_l (R_{n-1} x ... x R_0)`` where ``R_i = RZ RY RZ`` and
``P_l`` is the permutation of the CNOT ring of that layer. All layer
unitaries (and their derivatives with respect to the ``3n`` angles of the
layer) are built once per call and then applied to a whole batch of
embedded inputs.

Shapes used throughout:

* ``theta``: ``(G, d, n, 3)`` - ``G`` independent parameter groups
  (for example one per token);
* ``x``: ``(B, G, n)`` - embedding angles for ``B`` samples;
* outputs: ``(B, G, m)`` where ``m`` is the number of measured qubits.

Gradients use one backward sweep over the layers (adjoint method). For the
noisy path the sweep propagates the observable in the Heisenberg picture;
the depolarizing channel is self-adjoint so the same map is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConfigurationError
from .noisesim import check_probability
from .simcore import MAX_QUBITS, cnot_permutation, default_offsets, z_signs


@lru_cache(maxsize=None)
def _ring_inverse_perm(n: int, offset: int) -> np.ndarray:
    """Row map ``r -> source`` of the whole CNOT ring for one layer."""
    idx = np.arange(2**n)
    for q in range(n):
        idx = idx[cnot_permutation(q, (q + offset) % n, n)]
    return idx


def rotation_factors(theta: np.ndarray):
    """``RZ(t3) RY(t2) RZ(t1)`` and its three partial derivatives.

    Returns ``R`` with shape ``theta.shape[:-1] + (2, 2)`` and ``dR`` with
    shape ``theta.shape[:-1] + (3, 2, 2)``.
    """
    lead = theta.shape[:-1]
    rz1 = np.zeros(lead + (2, 2), dtype=complex)
    rz3 = np.zeros(lead + (2, 2), dtype=complex)
    rz1[..., 0, 0] = np.exp(-0.5j * theta[..., 0])
    rz1[..., 1, 1] = np.exp(0.5j * theta[..., 0])
    rz3[..., 0, 0] = np.exp(-0.5j * theta[..., 2])
    rz3[..., 1, 1] = np.exp(0.5j * theta[..., 2])
    c, s = np.cos(theta[..., 1] / 2), np.sin(theta[..., 1] / 2)
    ry = np.empty(lead + (2, 2), dtype=complex)
    ry[..., 0, 0], ry[..., 0, 1], ry[..., 1, 0], ry[..., 1, 1] = c, -s, s, c
    # Rotation generators: d/dt exp(-i t P/2) = (-i/2) P exp(-i t P/2)
    gz = np.array([[-0.5j, 0], [0, 0.5j]])
    gy = np.array([[0, -0.5], [0.5, 0]], dtype=complex)
    ry_rz1 = ry @ rz1
    R = rz3 @ ry_rz1
    dR = np.stack(
        [rz3 @ ry @ (gz @ rz1), rz3 @ (gy @ ry_rz1), gz @ R], axis=-3
    )
    return R, dR


def _kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    s = out.shape
    return out.reshape(s[:-4] + (s[-4] * s[-3], s[-2] * s[-1]))


def _kron_chain(factors):
    """``factors[n-1] x ... x factors[0]`` (qubit 0 is the rightmost factor)."""
    out = factors[-1]
    for f in reversed(factors[:-1]):
        out = _kron(out, f)
    return out


@dataclass(frozen=True)
class BlockSpec:
    """Static description of a block: qubit count, depth, measured qubits."""

    n_qubits: int
    depth: int
    measure: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")

    @property
    def measured(self) -> tuple[int, ...]:
        return tuple(range(self.n_qubits)) if self.measure is None else self.measure

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_params(self) -> int:
        return 3 * self.n_qubits * self.depth


def layer_unitaries(theta: np.ndarray, spec: BlockSpec, derivatives: bool = True):
    """Layer unitaries ``(G, d, N, N)`` and derivatives ``(G, d, 3n, N, N)``.

    Derivative index ``3*i + k`` is the partial with respect to ``theta[..., i, k]``.
    """
    n, d = spec.n_qubits, spec.depth
    if theta.shape[-3:] != (d, n, 3):
        raise ConfigurationError(f"theta shape {theta.shape} does not match block {(d, n, 3)}")
    R, dR = rotation_factors(theta)
    factors = [R[..., i, :, :] for i in range(n)]
    U = _kron_chain(factors)
    dU = None
    if derivatives:
        parts = []
        for i in range(n):
            for k in range(3):
                fs = list(factors)
                fs[i] = dR[..., i, k, :, :]
                parts.append(_kron_chain(fs))
        dU = np.stack(parts, axis=-3)
    if n > 1:
        offsets = default_offsets(n, d)
        for layer in range(d):
            perm = _ring_inverse_perm(n, int(offsets[layer]))
            U[..., layer, :, :] = np.take(U[..., layer, :, :], perm, axis=-2)
            if dU is not None:
                dU[..., layer, :, :, :] = np.take(dU[..., layer, :, :, :], perm, axis=-2)
    return U, dU


def embed_product(x: np.ndarray, n: int):
    """Real product states ``(..., 2**n)`` for angles ``x`` of shape ``(..., n)``
    and their input derivatives ``(..., n, 2**n)``."""
    c, s = np.cos(x / 2), np.sin(x / 2)
    singles = np.stack([c, s], axis=-1)  # (..., n, 2)
    dsingles = np.stack([-0.5 * s, 0.5 * c], axis=-1)

    def product(fs):
        out = fs[n - 1]
        for q in range(n - 2, -1, -1):
            out = (out[..., :, None] * fs[q][..., None, :]).reshape(out.shape[:-1] + (-1,))
        return out

    base = [singles[..., q, :] for q in range(n)]
    psi = product(base)
    dpsi = []
    for q in range(n):
        fs = list(base)
        fs[q] = dsingles[..., q, :]
        dpsi.append(product(fs))
    return psi, np.stack(dpsi, axis=-2)


def _check_inputs(x: np.ndarray, theta: np.ndarray, spec: BlockSpec):
    if x.ndim != 3 or x.shape[-1] != spec.n_qubits:
        raise ConfigurationError(f"inputs must be (B, G, {spec.n_qubits}), got {x.shape}")
    if theta.ndim != 4 or theta.shape[0] != x.shape[1]:
        raise ConfigurationError(f"theta groups {theta.shape} do not match inputs {x.shape}")


class BlockRun:
    """Forward evaluation of a batch of blocks; keeps what backward needs.

    Internally pure states are stored as ``(G, N, B)`` and density matrices
    as ``(G, N, B, N)`` so that every layer is a single matrix product per
    group.
    """

    def __init__(self, x: np.ndarray, theta: np.ndarray, spec: BlockSpec, p_d: float = 0.0):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        _check_inputs(x, theta, spec)
        self.spec = spec
        self.p_d = check_probability(p_d)
        self.U, self.dU = layer_unitaries(theta, spec)
        self.Uh = np.conj(np.swapaxes(self.U, -1, -2))
        psi0, dpsi0 = embed_product(x, spec.n_qubits)
        self.psi0 = np.ascontiguousarray(psi0.transpose(1, 2, 0))  # (G, N, B)
        self.dpsi0 = dpsi0  # (B, G, n, N)
        self.signs = z_signs(spec.n_qubits)[list(spec.measured)]
        if self.p_d > 0:
            self._forward_mixed()
        else:
            self._forward_pure()

    def _forward_pure(self):
        states = [self.psi0.astype(complex)]
        for layer in range(self.spec.depth):
            states.append(self.U[:, layer] @ states[-1])
        self.states = states
        probs = (states[-1].real ** 2 + states[-1].imag ** 2).transpose(2, 0, 1)
        self.output = probs @ self.signs.T

    def _forward_mixed(self):
        G, N, B = self.psi0.shape
        psi = self.psi0
        rho = (psi[:, :, :, None] * psi.transpose(0, 2, 1)[:, None, :, :]).astype(complex)
        states = [rho]
        for layer in range(self.spec.depth):
            rho = (self.U[:, layer] @ rho.reshape(G, N, B * N)).reshape(G, N * B, N)
            rho = (rho @ self.Uh[:, layer]).reshape(G, N, B, N)
            depolarize_all(rho, self.spec.n_qubits, self.p_d, layout="gnbn")
            states.append(rho)
        self.states = states
        diag = np.real(np.einsum("gibi->bgi", rho))
        self.output = diag @ self.signs.T

    def backward(self, grad_out: np.ndarray):
        """Vector-Jacobian product: ``(grad_x (B,G,n), grad_theta (G,d,n,3))``."""
        grad_out = np.asarray(grad_out, dtype=float)
        weights = grad_out @ self.signs  # (B, G, N) diagonal observable
        if self.p_d > 0:
            return self._backward_mixed(weights)
        return self._backward_pure(weights)

    def _param_grad(self, layer, S):
        # 2 Re sum_ij dU[p, i, j] S[j, i]
        G = S.shape[0]
        N = self.spec.dim
        dU = self.dU[:, layer].reshape(G, -1, N * N)
        St = np.swapaxes(S, -1, -2).reshape(G, N * N, 1)
        return 2.0 * np.real(dU @ St)[..., 0]

    def _finish(self, gtheta):
        n, d = self.spec.n_qubits, self.spec.depth
        return gtheta.reshape(gtheta.shape[0], d, n, 3)

    def _backward_pure(self, weights):
        d = self.spec.depth
        lam = weights.transpose(1, 2, 0) * self.states[-1]  # (G, N, B)
        gtheta = np.zeros((self.U.shape[0], d, 3 * self.spec.n_qubits))
        for layer in range(d - 1, -1, -1):
            S = self.states[layer] @ np.conj(np.swapaxes(lam, -1, -2))  # (G, N_j, N_i)
            gtheta[:, layer] = self._param_grad(layer, S)
            lam = self.Uh[:, layer] @ lam
        gx = 2.0 * np.einsum("gkb,bgqk->bgq", lam.real, self.dpsi0)
        return gx, self._finish(gtheta)

    def _backward_mixed(self, weights):
        d, n = self.spec.depth, self.spec.n_qubits
        G, N, B = self.psi0.shape
        obs = np.zeros((G, N, B, N), dtype=complex)
        idx = np.arange(N)
        obs[:, idx, :, idx] = weights.transpose(2, 1, 0)
        gtheta = np.zeros((G, d, 3 * n))
        for layer in range(d - 1, -1, -1):
            depolarize_all(obs, n, self.p_d, layout="gnbn")
            # d Tr(O U rho U^+) = 2 Re Tr(dU S) with S = sum_b rho U^+ O
            UhO = (self.Uh[:, layer] @ obs.reshape(G, N, B * N)).reshape(G, N, B, N)
            prev = self.states[layer].reshape(G, N, B * N)
            S = prev @ UhO.transpose(0, 2, 1, 3).reshape(G, B * N, N)
            gtheta[:, layer] = self._param_grad(layer, S)
            obs = (UhO.reshape(G, N * B, N) @ self.U[:, layer]).reshape(G, N, B, N)
        v = np.einsum("gibj,gjb->gbi", obs, self.psi0)
        gx = 2.0 * np.einsum("bgqi,gbi->bgq", self.dpsi0, v.real)
        return gx, self._finish(gtheta)


def depolarize_all(rho: np.ndarray, n: int, p_d: float, layout: str = "nn") -> np.ndarray:
    """Depolarize every qubit of a batch of density matrices, in place.

    ``layout="nn"`` means trailing ``(N, N)`` axes; ``"gnbn"`` means
    ``(G, N, B, N)``. Uses ``E(rho) = (1 - 4p/3) rho + (2p/3) Tr_q(rho) x I_q``.
    """
    if p_d == 0:
        return rho
    if not rho.flags.c_contiguous:
        raise ValueError("depolarize_all needs a contiguous array")
    if layout == "gnbn":
        G, _, B, _ = rho.shape
        pre, mid = (G,), (B,)
    else:
        pre, mid = rho.shape[:-2], ()
    for q in range(n):
        hi, lo = 2 ** (n - q - 1), 2**q
        r = rho.reshape(pre + (hi, 2, lo) + mid + (hi, 2, lo))
        sl = [slice(None)] * r.ndim
        a = len(pre) + 1
        b = a + 3 + len(mid)

        def block(i):
            s = list(sl)
            s[a], s[b] = i, i
            return tuple(s)

        t = (2 * p_d / 3) * (r[block(0)] + r[block(1)])
        r *= 1 - 4 * p_d / 3
        r[block(0)] += t
        r[block(1)] += t
    return rho


def block_states(theta: np.ndarray, spec: BlockSpec, x: np.ndarray | None = None) -> np.ndarray:
    """Final pure states ``(G, N)`` of ``G`` blocks (zero input unless ``x`` given)."""
    U, _ = layer_unitaries(theta, spec, derivatives=False)
    G = theta.shape[0]
    if x is None:
        psi = np.zeros((G, spec.dim), dtype=complex)
        psi[:, 0] = 1.0
    else:
        psi = embed_product(np.asarray(x, dtype=float), spec.n_qubits)[0].astype(complex)
    for layer in range(spec.depth):
        psi = np.einsum("gij,gj->gi", U[:, layer], psi)
    return psi
