"""Density-matrix simulation with single-qubit depolarizing noise.

The depolarizing channel on one qubit is

    E(rho) = (1 - p) rho + p/3 (X rho X + Y rho Y + Z rho Z)

and it is applied to every qubit after every parameterized layer (after the
CNOT ring of that layer). Embedding rotations are noiseless.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .simcore import (
    EntanglerSchedule,
    ParamBlock,
    _check_block,
    cnot_permutation,
    embed_input,
    layer_gates,
    ry_matrix,
    rz_matrix,
    z_signs,
)

MAX_DEPOLARIZING = 0.75

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def check_probability(p_d: float) -> float:
    p_d = float(p_d)
    if not 0.0 <= p_d <= MAX_DEPOLARIZING:
        raise ConfigurationError(
            f"depolarizing probability {p_d} outside [0, {MAX_DEPOLARIZING}]"
        )
    return p_d


@dataclass(frozen=True)
class NoiseConfig:
    p_d: float = 0.0

    def __post_init__(self):
        check_probability(self.p_d)


@dataclass
class DensityMatrix:
    n_qubits: int
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        dim = 2**self.n_qubits
        if self.rho.shape != (dim, dim):
            raise ConfigurationError(f"rho must be {dim}x{dim}, got {self.rho.shape}")

    @classmethod
    def from_state(cls, state) -> "DensityMatrix":
        a = state.amplitudes
        return cls(state.n_qubits, np.outer(a, a.conj()))

    def trace(self) -> complex:
        return np.trace(self.rho)

    def expect_z(self) -> np.ndarray:
        return z_signs(self.n_qubits) @ np.real(np.diag(self.rho))


def _embed_operator(matrix: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Full ``2**n`` operator acting as ``matrix`` on ``qubit``."""
    return np.kron(np.kron(np.eye(2 ** (n_qubits - qubit - 1)), matrix), np.eye(2**qubit))


def depolarize_qubit(rho: DensityMatrix, qubit: int, p_d: float) -> DensityMatrix:
    p_d = check_probability(p_d)
    n = rho.n_qubits
    if not 0 <= qubit < n:
        raise ConfigurationError(f"qubit {qubit} out of range for {n} qubits")
    out = (1 - p_d) * rho.rho
    for pauli in (PAULI_X, PAULI_Y, PAULI_Z):
        op = _embed_operator(pauli, qubit, n)
        out = out + (p_d / 3) * (op @ rho.rho @ op)
    return DensityMatrix(n, out)


def _conjugate_single(rho: np.ndarray, matrix: np.ndarray, qubit: int, n: int) -> np.ndarray:
    op = _embed_operator(matrix, qubit, n)
    return op @ rho @ op.conj().T


def run_block_noisy(
    x,
    params: ParamBlock,
    schedule: EntanglerSchedule | None = None,
    noise: NoiseConfig | float = 0.0,
    return_state: bool = False,
    observer=None,
):
    """Noisy block evaluation returning ``<Z_i>`` for every qubit.

    ``observer(kind, rho)`` is called after every gate and every channel
    application, e.g. to audit trace and Hermiticity along the way.
    """
    p_d = noise.p_d if isinstance(noise, NoiseConfig) else check_probability(noise)
    if schedule is None:
        schedule = EntanglerSchedule.default(params.n_qubits, params.depth)
    state = embed_input(x)
    _check_block(state, params, schedule)
    n = state.n_qubits
    dm = DensityMatrix.from_state(state)
    rho = dm.rho
    gates = list(layer_gates(params, schedule))
    per_layer = 3 * n + (n if n > 1 else 0)
    for layer in range(params.depth):
        for kind, qubits, idx in gates[layer * per_layer:(layer + 1) * per_layer]:
            if kind == "cnot":
                perm = cnot_permutation(qubits[0], qubits[1], n)
                rho = rho[perm][:, perm]
            else:
                gate = rz_matrix if kind == "rz" else ry_matrix
                rho = _conjugate_single(rho, gate(params.angles[idx]), qubits[0], n)
            if observer is not None:
                observer(kind, rho)
        if p_d > 0:
            for q in range(n):
                rho = depolarize_qubit(DensityMatrix(n, rho), q, p_d).rho
                if observer is not None:
                    observer("depolarize", rho)
    dm = DensityMatrix(n, rho)
    z = dm.expect_z()
    return (z, dm) if return_state else z
