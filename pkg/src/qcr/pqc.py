"""Parameterised-circuit policies on 4 qubits.

Two evaluation paths exist for each circuit:

* ``*_np``: runs the gates through :mod:`qcr.qsim` on a single observation
  (used when acting);
* the ``Tensor`` path: simulates a whole batch of observations with real and
  imaginary parts held as :class:`~qcr.diffnet.Tensor` objects, so gradients
  flow through the simulation (used in updates).

The two agree to rounding; the test-suite checks that, and checks the
``Tensor`` gradients against the parameter-shift rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import qsim
from .diffnet import Tensor, as_tensor, stack, take

N_QUBITS = 4
DEEP_DEPTH = 4
CZ_RING = ((0, 1), (1, 2), (2, 3), (3, 0))
# per-qubit Z, nearest pairs on the ring, then the two diagonals
OBSERVABLES: tuple[tuple[int, ...], ...] = (
    (0,), (1,), (2,), (3,), (0, 1), (1, 2), (2, 3), (0, 3), (0, 2), (1, 3),
)


def _z_signs(qubits: tuple[int, ...]) -> np.ndarray:
    sign = np.ones((2,) * N_QUBITS)
    for bits in itertools.product((0, 1), repeat=N_QUBITS):
        sign[bits] = (-1) ** sum(bits[q] for q in qubits)
    return sign


OBS_SIGNS = np.stack([_z_signs(o).reshape(-1) for o in OBSERVABLES])  # (10, 16)
_CZ_RING_SIGN = np.ones((2,) * N_QUBITS)
for _bits in itertools.product((0, 1), repeat=N_QUBITS):
    _CZ_RING_SIGN[_bits] = (-1) ** sum(_bits[a] & _bits[b] for a, b in CZ_RING)


# -- differentiable batched simulation -------------------------------------


class TensorState:
    """Batch of 4-qubit pure states; ``re``/``im`` have shape ``(B, 2, 2, 2, 2)``."""

    def __init__(self, batch: int):
        re = np.zeros((batch,) + (2,) * N_QUBITS)
        re[(slice(None),) + (0,) * N_QUBITS] = 1.0
        self.re = Tensor(re)
        self.im = Tensor(np.zeros_like(re))
        self.batch = batch

    def _angle_parts(self, angle: Tensor) -> tuple[Tensor, Tensor]:
        half = as_tensor(angle) * 0.5
        c, s = half.cos(), half.sin()
        if c.ndim == 1:
            c = c.reshape(self.batch, 1, 1, 1)
            s = s.reshape(self.batch, 1, 1, 1)
        return c, s

    def ry(self, q: int, angle) -> None:
        c, s = self._angle_parts(angle)
        ax = q + 1
        r0, r1 = take(self.re, 0, ax), take(self.re, 1, ax)
        i0, i1 = take(self.im, 0, ax), take(self.im, 1, ax)
        self.re = stack([c * r0 - s * r1, s * r0 + c * r1], axis=ax)
        self.im = stack([c * i0 - s * i1, s * i0 + c * i1], axis=ax)

    def rz(self, q: int, angle) -> None:
        # diag(e^{-i a/2}, e^{+i a/2})
        c, s = self._angle_parts(angle)
        ax = q + 1
        r0, r1 = take(self.re, 0, ax), take(self.re, 1, ax)
        i0, i1 = take(self.im, 0, ax), take(self.im, 1, ax)
        self.re = stack([c * r0 + s * i0, c * r1 - s * i1], axis=ax)
        self.im = stack([c * i0 - s * r0, c * i1 + s * r1], axis=ax)

    def cz_ring(self) -> None:
        self.re = self.re * _CZ_RING_SIGN
        self.im = self.im * _CZ_RING_SIGN

    def expectations(self, signs: np.ndarray) -> Tensor:
        """``(B, n_obs)`` expectation values of diagonal +/-1 observables."""
        probs = (self.re * self.re + self.im * self.im).reshape(self.batch, 2**N_QUBITS)
        return probs @ Tensor(signs.T)


# -- deep re-uploading actor -------------------------------------------------


@dataclass
class DeepActorCircuit:
    """Depth-4 data re-uploading circuit with trainable input scaling.

    ``encoding`` and ``variational`` have shape ``(depth, 4, 2)``; the last axis
    is (Ry, Rz). ``output`` holds one weight per action observable.
    """

    encoding: np.ndarray
    variational: np.ndarray
    output: np.ndarray

    def __post_init__(self):
        n_out = len(self.output)
        if n_out > len(OBSERVABLES):
            raise qsim.ConfigurationError(
                f"{n_out} actions need more than the {len(OBSERVABLES)} available observables"
            )
        if self.encoding.shape != (DEEP_DEPTH, N_QUBITS, 2) or self.variational.shape != (DEEP_DEPTH, N_QUBITS, 2):
            raise qsim.ConfigurationError("encoding/variational must have shape (4, 4, 2)")

    @classmethod
    def init(cls, n_actions: int, rng: np.random.Generator) -> "DeepActorCircuit":
        return cls(
            encoding=rng.uniform(-0.1, 0.1, (DEEP_DEPTH, N_QUBITS, 2)),
            variational=rng.uniform(-0.1, 0.1, (DEEP_DEPTH, N_QUBITS, 2)),
            output=np.zeros(n_actions),
        )


def deep_expectations_np(encoding: np.ndarray, variational: np.ndarray, obs: np.ndarray, n_obs: int) -> np.ndarray:
    state = qsim.StateVector.zero(N_QUBITS)
    for layer in range(encoding.shape[0]):
        for q in range(N_QUBITS):
            state = qsim.apply_gate(state, qsim.Ry(encoding[layer, q, 0] * obs[q]), q)
            state = qsim.apply_gate(state, qsim.Rz(encoding[layer, q, 1] * obs[q]), q)
        for q in range(N_QUBITS):
            state = qsim.apply_gate(state, qsim.Ry(variational[layer, q, 0]), q)
            state = qsim.apply_gate(state, qsim.Rz(variational[layer, q, 1]), q)
        for a, b in CZ_RING:
            state = qsim.apply_gate(state, qsim.CZ(), a, b)
    return np.array([qsim.expectation_z(state, o) for o in OBSERVABLES[:n_obs]])


def deep_actor_logits_np(circuit: DeepActorCircuit, obs: np.ndarray) -> np.ndarray:
    ev = deep_expectations_np(circuit.encoding, circuit.variational, np.asarray(obs, float), len(circuit.output))
    return circuit.output * ev


def deep_actor_logits(encoding: Tensor, variational: Tensor, output: Tensor, obs: np.ndarray) -> Tensor:
    """Batched logits ``(B, n_actions)`` for observations ``obs`` of shape ``(B, 4)``."""
    obs = np.atleast_2d(obs)
    n_out = output.shape[0]
    if n_out > len(OBSERVABLES):
        raise qsim.ConfigurationError(f"{n_out} actions exceed the observable menu")
    st = TensorState(obs.shape[0])
    for layer in range(encoding.shape[0]):
        for q in range(N_QUBITS):
            st.ry(q, encoding[layer, q, 0] * obs[:, q])
            st.rz(q, encoding[layer, q, 1] * obs[:, q])
        for q in range(N_QUBITS):
            st.ry(q, variational[layer, q, 0])
            st.rz(q, variational[layer, q, 1])
        st.cz_ring()
    return st.expectations(OBS_SIGNS[:n_out]) * output


# -- shallow feature extractor ----------------------------------------------


def shallow_features_np(theta: np.ndarray, obs: np.ndarray) -> np.ndarray:
    state = qsim.StateVector.zero(N_QUBITS)
    for q in range(N_QUBITS):
        state = qsim.apply_gate(state, qsim.Ry(obs[q]), q)
        state = qsim.apply_gate(state, qsim.Ry(theta[q]), q)
    return np.array([qsim.expectation_z(state, q) for q in range(N_QUBITS)])


def shallow_features(theta: Tensor, obs: np.ndarray) -> Tensor:
    """Batched ``(B, 4)`` Pauli-Z features: Ry(o_i) then Ry(theta_i) on each wire."""
    obs = np.atleast_2d(obs)
    st = TensorState(obs.shape[0])
    for q in range(N_QUBITS):
        st.ry(q, Tensor(obs[:, q]))
        st.ry(q, theta[q])
    return st.expectations(OBS_SIGNS[:N_QUBITS])


# -- parameter-shift oracle ------------------------------------------------


def parameter_shift(f: Callable[[np.ndarray], np.ndarray], angles: np.ndarray, index: tuple) -> np.ndarray:
    """``(f(a + pi/2) - f(a - pi/2)) / 2`` for the single gate angle at ``index``."""
    plus, minus = angles.copy(), angles.copy()
    plus[index] += math.pi / 2
    minus[index] -= math.pi / 2
    return (f(plus) - f(minus)) / 2
