"""Small dense quantum simulator (1 to 6 qubits).

Qubit 0 is the most significant bit of the computational-basis index, so the
amplitude array reshaped to ``(2,) * n`` has qubit ``q`` on axis ``q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MAX_QUBITS = 6
STRUCT_TOL = 1e-10

I2 = np.eye(2, dtype=np.complex128)
X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H_MATRIX = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)


class ConfigurationError(ValueError):
    """Bad qubit index, gate name or circuit shape."""


class DomainError(ValueError):
    """A probability or angle outside its admissible range."""


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_n(self.n_qubits)
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ConfigurationError(f"expected {2**self.n_qubits} amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > STRUCT_TOL:
            raise DomainError(f"state is not normalised (|psi|^2 = {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        _check_n(self.n_qubits)
        rho = np.asarray(self.matrix, dtype=np.complex128)
        dim = 2**self.n_qubits
        if rho.shape != (dim, dim):
            raise ConfigurationError(f"expected a {dim}x{dim} matrix, got {rho.shape}")
        if abs(np.trace(rho) - 1.0) > STRUCT_TOL:
            raise DomainError(f"trace is {np.trace(rho)}, not 1")
        if np.max(np.abs(rho - rho.conj().T)) > STRUCT_TOL:
            raise DomainError("density matrix is not Hermitian")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        return StateVector.zero(n_qubits).to_density_matrix()

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "DensityMatrix":
        return StateVector.basis(n_qubits, index).to_density_matrix()

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.matrix).real, 0.0, 1.0)


State = Union[StateVector, DensityMatrix]


@dataclass(frozen=True)
class Gate:
    """A named gate; ``angle`` is used by the parameterised ones."""

    name: str
    angle: float = 0.0
    arity: int = field(default=1, compare=False)

    def matrix(self) -> np.ndarray:
        if self.name == "H":
            return H_MATRIX
        if self.name == "Phase":
            return np.array([[1, 0], [0, np.exp(1j * self.angle)]], dtype=np.complex128)
        if self.name == "Ry":
            c, s = np.cos(self.angle / 2), np.sin(self.angle / 2)
            return np.array([[c, -s], [s, c]], dtype=np.complex128)
        if self.name == "Rz":
            e = np.exp(-0.5j * self.angle)
            return np.array([[e, 0], [0, e.conjugate()]], dtype=np.complex128)
        if self.name == "CZ":
            return np.diag([1, 1, 1, -1]).astype(np.complex128)
        raise ConfigurationError(f"unknown gate {self.name!r}")


def H() -> Gate:
    return Gate("H")


def Phase(phi: float) -> Gate:
    return Gate("Phase", float(phi))


def Ry(theta: float) -> Gate:
    return Gate("Ry", float(theta))


def Rz(theta: float) -> Gate:
    return Gate("Rz", float(theta))


def CZ() -> Gate:
    return Gate("CZ", arity=2)


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n}")


def _check_qubits(n: int, qubits: Sequence[int]) -> None:
    for q in qubits:
        if not 0 <= q < n:
            raise ConfigurationError(f"qubit index {q} out of range for {n} qubits")
    if len(set(qubits)) != len(qubits):
        raise ConfigurationError(f"repeated qubit index in {tuple(qubits)}")


def _apply_op(tensor: np.ndarray, op: np.ndarray, qubits: Sequence[int], offset: int, conj: bool) -> np.ndarray:
    # contract a k-qubit operator into the given axes of tensor
    k = len(qubits)
    op = op.reshape((2,) * (2 * k))
    if conj:
        op = op.conj()
    axes = [offset + q for q in qubits]
    out = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def apply_unitary(state: State, unitary: np.ndarray, qubits: Sequence[int]) -> State:
    n = state.n_qubits
    _check_qubits(n, qubits)
    if unitary.shape != (2 ** len(qubits),) * 2:
        raise ConfigurationError(f"operator shape {unitary.shape} does not act on {len(qubits)} qubit(s)")
    if len(qubits) == n and tuple(qubits) == tuple(range(n)):
        # operator spans the whole register in natural order: plain matrix products
        if isinstance(state, StateVector):
            return StateVector(n, unitary @ state.amplitudes)
        return DensityMatrix(n, unitary @ state.matrix @ unitary.conj().T)
    if isinstance(state, StateVector):
        psi = _apply_op(state.amplitudes.reshape((2,) * n), unitary, qubits, 0, False)
        return StateVector(n, psi.reshape(-1))
    rho = state.matrix.reshape((2,) * (2 * n))
    rho = _apply_op(rho, unitary, qubits, 0, False)
    rho = _apply_op(rho, unitary, qubits, n, True)
    dim = 2**n
    return DensityMatrix(n, rho.reshape(dim, dim))


def apply_gate(state: State, gate: Gate, *qubits: int) -> State:
    """Apply ``gate`` to ``qubits`` (two indices for CZ, one otherwise)."""
    if len(qubits) != gate.arity:
        raise ConfigurationError(f"{gate.name} acts on {gate.arity} qubit(s), got {qubits}")
    return apply_unitary(state, gate.matrix(), qubits)


@dataclass(frozen=True)
class KrausChannel:
    label: str
    p: float
    operators: tuple[np.ndarray, ...]

    def completeness_error(self) -> float:
        total = sum(k.conj().T @ k for k in self.operators)
        return float(np.max(np.abs(total - I2)))


CHANNEL_ALIASES = {
    "bit_flip": "bit_flip",
    "bitflip": "bit_flip",
    "depolarizing": "depolarizing",
    "depolarising": "depolarizing",
    "amplitude_damping": "amplitude_damping",
    "amplitude": "amplitude_damping",
}


def canonical_channel(label: str) -> str:
    try:
        return CHANNEL_ALIASES[label]
    except KeyError:
        raise ConfigurationError(f"unknown channel {label!r}") from None


def make_channel(label: str, p: float) -> KrausChannel:
    """Single-qubit Kraus channel.

    Depolarizing is parameterised so that ``rho -> (1 - p) rho + p I/2``.
    """
    label = canonical_channel(label)
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"channel probability must lie in [0, 1], got {p}")
    if label == "bit_flip":
        ops = (np.sqrt(1 - p) * I2, np.sqrt(p) * X)
    elif label == "depolarizing":
        ops = (np.sqrt(1 - 0.75 * p) * I2, np.sqrt(p / 4) * X, np.sqrt(p / 4) * Y, np.sqrt(p / 4) * Z)
    else:
        ops = (
            np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=np.complex128),
            np.array([[0, np.sqrt(p)], [0, 0]], dtype=np.complex128),
        )
    return KrausChannel(label, p, ops)


def apply_channel(rho: DensityMatrix, channel: KrausChannel, qubit: int = 0) -> DensityMatrix:
    n = rho.n_qubits
    _check_qubits(n, (qubit,))
    t = rho.matrix.reshape((2,) * (2 * n))
    out = np.zeros_like(t)
    for k in channel.operators:
        out += _apply_op(_apply_op(t, k, (qubit,), 0, False), k, (qubit,), n, True)
    dim = 2**n
    return DensityMatrix(n, out.reshape(dim, dim))


def _marginal(state: State, qubit: int) -> np.ndarray:
    n = state.n_qubits
    _check_qubits(n, (qubit,))
    probs = state.probabilities().reshape((2,) * n)
    return probs.sum(axis=tuple(a for a in range(n) if a != qubit))


def measure_probability_one(state: State, qubit: int = 0) -> float:
    """Born probability of reading 1 on ``qubit``."""
    return float(np.clip(_marginal(state, qubit)[1], 0.0, 1.0))


def expectation_z(state: State, qubits: Union[int, Sequence[int]] = 0) -> float:
    """``<Z>`` on one wire or ``<Z x Z x ...>`` on several."""
    if isinstance(qubits, (int, np.integer)):
        qubits = (int(qubits),)
    n = state.n_qubits
    _check_qubits(n, qubits)
    probs = state.probabilities().reshape((2,) * n)
    sign = np.ones((2,) * n)
    for q in qubits:
        shape = [1] * n
        shape[q] = 2
        sign = sign * np.array([1.0, -1.0]).reshape(shape)
    return float(np.clip(np.sum(probs * sign), -1.0, 1.0))


def sample_outcomes(p1: float, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` i.i.d. Bernoulli(p1) bits from ``rng``.

    One uniform ``u`` per shot. For ``p1 < 1/2`` the outcome is ``u < p1``,
    otherwise ``u >= 1 - p1``. Both branches have probability ``p1``, and the
    sets for ``p1`` and ``1 - p1`` are complements of each other, so a channel
    that maps ``p1 -> 1 - p1`` inverts every outcome drawn from the same stream.
    """
    if not 0.0 <= p1 <= 1.0:
        raise DomainError(f"p1 must lie in [0, 1], got {p1}")
    if shots < 1:
        raise DomainError("shots must be >= 1")
    u = rng.random(shots)
    if p1 < 0.5:
        return (u < p1).astype(np.int8)
    return (u >= 1.0 - p1).astype(np.int8)
