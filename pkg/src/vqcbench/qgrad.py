"""Jacobians of block outputs ``<Z_i>`` with respect to angles and inputs.

Three independent routes are provided:

* :func:`adjoint_jacobian` - one backward sweep over the gate list (pure states);
* :func:`parameter_shift_jacobian` - exact two-point shift rule per angle;
* :func:`finite_diff_jacobian` - central differences, used as a test oracle.

:func:`noisy_jacobian` applies the shift rule to the density-matrix simulator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noisesim import NoiseConfig, run_block_noisy
from .simcore import (
    EntanglerSchedule,
    ParamBlock,
    _check_block,
    apply_cnot,
    apply_single_qubit,
    embed_input,
    layer_gates,
    ry_matrix,
    rz_matrix,
    run_block,
    z_signs,
)

FD_STEP = 1e-4

_GEN = {
    "ry": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "rz": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass
class Jacobian:
    """Derivatives of the ``n`` outputs.

    ``wrt_params`` has shape ``(n, 3*n*d)`` in the flattened ``(layer, qubit, k)``
    order of :class:`ParamBlock`; ``wrt_inputs`` has shape ``(n, n)``.
    """

    wrt_params: np.ndarray
    wrt_inputs: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.wrt_params, self.wrt_inputs])


def _schedule(params: ParamBlock, schedule):
    return schedule or EntanglerSchedule.default(params.n_qubits, params.depth)


def _shift_jacobian(f, x, params: ParamBlock) -> Jacobian:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    flat = params.angles.reshape(-1)
    n_out = params.n_qubits
    jp = np.zeros((n_out, flat.size))
    for j in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[j] += np.pi / 2
        minus[j] -= np.pi / 2
        jp[:, j] = 0.5 * (
            f(x, ParamBlock(plus.reshape(params.angles.shape)))
            - f(x, ParamBlock(minus.reshape(params.angles.shape)))
        )
    jx = np.zeros((n_out, x.size))
    for i in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus[i] += np.pi / 2
        minus[i] -= np.pi / 2
        jx[:, i] = 0.5 * (f(plus, params) - f(minus, params))
    return Jacobian(jp, jx)


def parameter_shift_jacobian(x, params: ParamBlock, schedule=None) -> Jacobian:
    schedule = _schedule(params, schedule)
    return _shift_jacobian(lambda xx, pp: run_block(xx, pp, schedule), x, params)


def noisy_jacobian(x, params: ParamBlock, schedule=None, noise: NoiseConfig | float = 0.0) -> Jacobian:
    # Exact: each angle enters a single Pauli rotation and Pauli channels keep
    # the expectation a trigonometric polynomial of degree one in that angle.
    schedule = _schedule(params, schedule)
    return _shift_jacobian(
        lambda xx, pp: run_block_noisy(xx, pp, schedule, noise), x, params
    )


def finite_diff_jacobian(f, x, params: ParamBlock, h: float = FD_STEP) -> Jacobian:
    """Central differences of ``f(x, params) -> outputs``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    flat = params.angles.reshape(-1)
    n_out = np.asarray(f(x, params)).size
    jp = np.zeros((n_out, flat.size))
    for j in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[j] += h
        minus[j] -= h
        jp[:, j] = (
            f(x, ParamBlock(plus.reshape(params.angles.shape)))
            - f(x, ParamBlock(minus.reshape(params.angles.shape)))
        ) / (2 * h)
    jx = np.zeros((n_out, x.size))
    for i in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus[i] += h
        minus[i] -= h
        jx[:, i] = (f(plus, params) - f(minus, params)) / (2 * h)
    return Jacobian(jp, jx)


def adjoint_jacobian(x, params: ParamBlock, schedule=None) -> Jacobian:
    schedule = _schedule(params, schedule)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    state = embed_input(x)
    _check_block(state, params, schedule)
    n = state.n_qubits

    # Gate list including the embedding rotations, which carry input gradients.
    gates = [("ry", (q,), ("x", q)) for q in range(n)]
    gates += [(k, qs, ("theta", idx)) for k, qs, idx in layer_gates(params, schedule)]

    def angle_of(ref):
        kind, idx = ref
        return x[idx] if kind == "x" else params.angles[idx]

    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    for kind, qubits, ref in gates:
        if kind == "cnot":
            psi = apply_cnot(psi, qubits[0], qubits[1], n)
        else:
            gate = rz_matrix if kind == "rz" else ry_matrix
            psi = apply_single_qubit(psi, gate(angle_of(ref)), qubits[0], n)

    # One adjoint vector per observable Z_i, swept back together.
    signs = z_signs(n)
    lam = signs * psi[None, :]
    phi = psi
    jp = np.zeros((n, params.n_params))
    jx = np.zeros((n, n))
    for kind, qubits, ref in reversed(gates):
        if kind == "cnot":
            phi = apply_cnot(phi, qubits[0], qubits[1], n)
            lam = np.stack([apply_cnot(row, qubits[0], qubits[1], n) for row in lam])
            continue
        q = qubits[0]
        gate = rz_matrix if kind == "rz" else ry_matrix
        # d/dt exp(-i t P / 2) = -i/2 P exp(-i t P / 2), evaluated after the gate.
        mu = apply_single_qubit(phi, -0.5j * _GEN[kind], q, n)
        grad = 2.0 * np.real(lam.conj() @ mu)
        if ref[0] == "x":
            jx[:, ref[1]] = grad
        else:
            jp[:, np.ravel_multi_index(ref[1], params.angles.shape)] = grad
        inv = gate(angle_of(ref)).conj().T
        phi = apply_single_qubit(phi, inv, q, n)
        lam = np.stack([apply_single_qubit(row, inv, q, n) for row in lam])
    return Jacobian(jp, jx)
