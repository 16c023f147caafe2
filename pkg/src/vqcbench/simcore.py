"""Gate-by-gate statevector simulation of the layered rotation ansatz.

Basis ordering is little-endian: qubit ``q`` is bit ``q`` of the basis index,
so for three qubits the amplitude of ``|q2 q1 q0>`` lives at index
``4*q2 + 2*q1 + q0``.

This module is the reference implementation. The vectorised engine in
:mod:`vqcbench.engine` is checked against it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError

MAX_QUBITS = 16


def rz_matrix(angle: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * angle), 0.0], [0.0, np.exp(0.5j * angle)]], dtype=complex
    )


def ry_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def default_offsets(n_qubits: int, depth: int) -> np.ndarray:
    """CNOT ring offsets: layer ``l`` uses target ``(i + (l mod (n-1)) + 1) mod n``."""
    if n_qubits < 2:
        return np.zeros(0, dtype=int)
    return np.arange(depth) % (n_qubits - 1) + 1


@dataclass(frozen=True)
class EntanglerSchedule:
    offsets: tuple[int, ...]

    @classmethod
    def default(cls, n_qubits: int, depth: int) -> "EntanglerSchedule":
        return cls(tuple(int(o) for o in default_offsets(n_qubits, depth)))


@dataclass
class ParamBlock:
    """Trainable angles of one block, shape ``(depth, n_qubits, 3)``.

    ``angles[l, i]`` holds the (first RZ, RY, second RZ) triple applied to
    qubit ``i`` in layer ``l``.
    """

    angles: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        if self.angles.ndim != 3 or self.angles.shape[2] != 3:
            raise ConfigurationError(
                f"angles must have shape (depth, n_qubits, 3), got {self.angles.shape}"
            )
        if self.depth < 1 or self.n_qubits < 1:
            raise ConfigurationError("depth and n_qubits must be >= 1")

    @property
    def depth(self) -> int:
        return self.angles.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.angles.shape[1]

    @property
    def n_params(self) -> int:
        return self.angles.size

    @classmethod
    def zeros(cls, n_qubits: int, depth: int) -> "ParamBlock":
        return cls(np.zeros((depth, n_qubits, 3)))

    @classmethod
    def random(cls, n_qubits: int, depth: int, rng: np.random.Generator) -> "ParamBlock":
        return cls(rng.uniform(0.0, 2 * np.pi, size=(depth, n_qubits, 3)))


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ConfigurationError(
                f"expected {2 ** self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def apply_single_qubit(amps: np.ndarray, matrix: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Apply a 2x2 ``matrix`` to ``qubit`` of a flat amplitude vector."""
    view = amps.reshape(2 ** (n_qubits - qubit - 1), 2, 2**qubit)
    return np.einsum("ij,ajb->aib", matrix, view).reshape(-1)


def cnot_permutation(control: int, target: int, n_qubits: int) -> np.ndarray:
    """Index map ``k -> k xor (bit_control(k) << target)``; self-inverse."""
    idx = np.arange(2**n_qubits)
    return idx ^ (((idx >> control) & 1) << target)


def apply_cnot(amps: np.ndarray, control: int, target: int, n_qubits: int) -> np.ndarray:
    return amps[cnot_permutation(control, target, n_qubits)]


def embed_input(x) -> StateVector:
    """Angle-embed ``x`` as ``RY(x_i)`` on qubit ``i`` of ``|0...0>``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.shape[0]
    state = StateVector.zero(n)
    amps = state.amplitudes
    for q, angle in enumerate(x):
        amps = apply_single_qubit(amps, ry_matrix(angle), q, n)
    return StateVector(n, amps)


def layer_gates(params: ParamBlock, schedule: EntanglerSchedule):
    """Yield the gate sequence of a block as ``(kind, qubits, angle_index)``.

    ``kind`` is ``"rz"``, ``"ry"`` or ``"cnot"``; ``angle_index`` is the
    ``(layer, qubit, k)`` index into ``params.angles`` for rotations.
    """
    n = params.n_qubits
    for layer in range(params.depth):
        for q in range(n):
            yield "rz", (q,), (layer, q, 0)
            yield "ry", (q,), (layer, q, 1)
            yield "rz", (q,), (layer, q, 2)
        if n > 1:
            offset = schedule.offsets[layer]
            for q in range(n):
                yield "cnot", (q, (q + offset) % n), None


def _check_block(state: StateVector, params: ParamBlock, schedule: EntanglerSchedule):
    if params.n_qubits != state.n_qubits:
        raise ConfigurationError(
            f"block has {params.n_qubits} qubits but state has {state.n_qubits}"
        )
    needed = params.depth if params.n_qubits > 1 else 0
    if len(schedule.offsets) < needed:
        raise ConfigurationError("entangler schedule shorter than block depth")
    for off in schedule.offsets[:needed]:
        if not 1 <= off <= params.n_qubits - 1:
            raise ConfigurationError(f"entangler offset {off} out of range")


def apply_block(
    state: StateVector, params: ParamBlock, schedule: EntanglerSchedule | None = None
) -> StateVector:
    if schedule is None:
        schedule = EntanglerSchedule.default(params.n_qubits, params.depth)
    _check_block(state, params, schedule)
    n = state.n_qubits
    amps = state.amplitudes
    for kind, qubits, idx in layer_gates(params, schedule):
        if kind == "cnot":
            amps = apply_cnot(amps, qubits[0], qubits[1], n)
        else:
            gate = rz_matrix if kind == "rz" else ry_matrix
            amps = apply_single_qubit(amps, gate(params.angles[idx]), qubits[0], n)
    return StateVector(n, amps)


def z_signs(n_qubits: int) -> np.ndarray:
    """``(n, 2**n)`` table of ``(-1)**bit_i(k)``."""
    idx = np.arange(2**n_qubits)
    bits = (idx[None, :] >> np.arange(n_qubits)[:, None]) & 1
    return 1.0 - 2.0 * bits


def measure_z_all(state: StateVector) -> np.ndarray:
    probs = np.abs(state.amplitudes) ** 2
    return z_signs(state.n_qubits) @ probs


def fidelity(s1: StateVector, s2: StateVector) -> float:
    if s1.n_qubits != s2.n_qubits:
        raise ConfigurationError("fidelity needs states with equal qubit counts")
    return float(min(1.0, abs(np.vdot(s1.amplitudes, s2.amplitudes)) ** 2))


def run_block(x, params: ParamBlock, schedule: EntanglerSchedule | None = None) -> np.ndarray:
    """Embed ``x``, apply the block and return all ``<Z_i>``."""
    return measure_z_all(apply_block(embed_input(x), params, schedule))
