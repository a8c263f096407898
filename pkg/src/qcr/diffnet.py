"""Reverse-mode autodiff over numpy arrays, dense layers, and Adam.

A ``Tensor`` records its parents and a closure that pushes its adjoint back to
them. ``Tensor.backward`` walks the graph in reverse topological order.
Broadcasting follows numpy; adjoints are summed back to each parent's shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class TrainingError(FloatingPointError):
    """Non-finite loss or gradient."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "op")

    def __init__(self, data, parents: tuple = (), backward: Optional[Callable] = None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self._backward = backward
        self.op = op

    shape = property(lambda self: self.data.shape)
    ndim = property(lambda self: self.data.ndim)

    def __repr__(self):
        return f"Tensor({self.data!r}, op={self.op})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accumulate(self, g: np.ndarray) -> None:
        g = _unbroadcast(g, self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    # -- graph traversal --------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            if node.parents:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)

        def back(g):
            self._accumulate(g)
            other._accumulate(g)

        return Tensor(self.data + other.data, (self, other), back, "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: self._accumulate(-g), "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def back(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)

        return Tensor(self.data * other.data, (self, other), back, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)

        def back(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * self.data / other.data**2)

        return Tensor(self.data / other.data, (self, other), back, "div")

    def __pow__(self, k: float):
        def back(g):
            self._accumulate(g * k * self.data ** (k - 1))

        return Tensor(self.data**k, (self,), back, "pow")

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if b.ndim == 1:
                self._accumulate(np.multiply.outer(g, b) if a.ndim > 1 else g * b)
                other._accumulate(np.tensordot(a, g, axes=(list(range(a.ndim - 1)), list(range(g.ndim)))) if a.ndim > 1 else g * a)
            else:
                self._accumulate(g @ np.swapaxes(b, -1, -2))
                ga = np.swapaxes(a, -1, -2) @ g if a.ndim > 1 else np.multiply.outer(a, g)
                other._accumulate(ga)

        return Tensor(a @ b, (self, other), back, "matmul")

    def __getitem__(self, idx):
        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)

        return Tensor(self.data[idx], (self,), back, "index")

    # -- reductions and reshapes -----------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape))

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        return Tensor(
            self.data.reshape(*shape), (self,), lambda g: self._accumulate(g.reshape(self.data.shape)), "reshape"
        )

    # -- elementwise functions ------------------------------------------

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor(out, (self,), lambda g: self._accumulate(g * (1 - out**2)), "tanh")

    def relu(self):
        return Tensor(np.maximum(self.data, 0), (self,), lambda g: self._accumulate(g * (self.data > 0)), "relu")

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, (self,), lambda g: self._accumulate(g * out), "exp")

    def log(self):
        return Tensor(np.log(self.data), (self,), lambda g: self._accumulate(g / self.data), "log")

    def cos(self):
        return Tensor(np.cos(self.data), (self,), lambda g: self._accumulate(-g * np.sin(self.data)), "cos")

    def sin(self):
        return Tensor(np.sin(self.data), (self,), lambda g: self._accumulate(g * np.cos(self.data)), "sin")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))

    return Tensor(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back, "stack")


def take(t: Tensor, index: int, axis: int) -> Tensor:
    """Select one slice along ``axis`` (dropping that axis)."""

    def back(g):
        full = np.zeros_like(t.data)
        sl = [slice(None)] * t.data.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        t._accumulate(full)

    return Tensor(np.take(t.data, index, axis=axis), (t,), back, "take")


def where_mask(mask: np.ndarray, t: Tensor, fill: float = -np.inf) -> Tensor:
    """Replace entries where ``mask`` is False by ``fill``; no gradient flows there."""
    mask = np.asarray(mask, dtype=bool)
    return Tensor(np.where(mask, t.data, fill), (t,), lambda g: t._accumulate(np.where(mask, g, 0.0)), "mask")


# -- probability utilities ------------------------------------------------


def softmax_np(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    top = np.max(logits, axis=-1, keepdims=True)
    if np.any(np.isneginf(top)):
        raise ValueError("softmax over a fully masked row")
    e = np.exp(logits - top)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax; ``-inf`` logits give ``-inf`` and zero gradient."""
    x = logits.data
    top = np.max(x, axis=-1, keepdims=True)
    if np.any(np.isneginf(top)):
        raise ValueError("softmax over a fully masked row")
    shifted = x - top
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def back(g):
        g = np.where(np.isfinite(out), g, 0.0)
        logits._accumulate(g - probs * g.sum(axis=-1, keepdims=True))

    return Tensor(out, (logits,), back, "log_softmax")


def softmax(logits: Tensor) -> Tensor:
    return log_softmax(logits).exp()


# -- layers -----------------------------------------------------------------

ACTIVATIONS = {
    "tanh": Tensor.tanh,
    "relu": Tensor.relu,
    "identity": lambda t: t,
}
ACTIVATIONS_NP = {"tanh": np.tanh, "relu": lambda x: np.maximum(x, 0), "identity": lambda x: x}


def dense_layer(x: Tensor, weights: Tensor, bias: Tensor, activation: str = "identity") -> Tensor:
    """``activation(x @ W + b)``; ``x`` may be a single vector or a batch of rows."""
    if x.shape[-1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise ValueError(f"shape mismatch: x {x.shape}, W {weights.shape}, b {bias.shape}")
    return ACTIVATIONS[activation](x @ weights + bias)


def dense_layer_np(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, activation: str = "identity") -> np.ndarray:
    return ACTIVATIONS_NP[activation](x @ weights + bias)


def init_dense(fan_in: int, fan_out: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)


# -- parameters and optimiser ---------------------------------------------


@dataclass
class ParamGroup:
    """Named arrays sharing one learning rate."""

    name: str
    values: dict[str, np.ndarray]
    learning_rate: float

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        self.values = {k: np.asarray(v, dtype=np.float64) for k, v in self.values.items()}

    def tensors(self) -> dict[str, Tensor]:
        return {k: Tensor(v) for k, v in self.values.items()}

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "arrays": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.values.items()},
        }

    @classmethod
    def from_dict(cls, name: str, d: dict) -> "ParamGroup":
        values = {k: np.array(a["data"], dtype=np.float64).reshape(a["shape"]) for k, a in d["arrays"].items()}
        return cls(name, values, float(d["learning_rate"]))


Gradients = dict[str, dict[str, np.ndarray]]


def collect_gradients(bound: dict[str, dict[str, Tensor]]) -> Gradients:
    """Gradients of tensors built by ``ParamGroup.tensors`` after a backward pass (zeros if unused)."""
    return {
        g: {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in ts.items()}
        for g, ts in bound.items()
    }


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)

    def step(self, groups: Iterable[ParamGroup], grads: Gradients) -> None:
        groups = list(groups)
        for group in groups:
            for k, g in grads.get(group.name, {}).items():
                if not np.all(np.isfinite(g)):
                    raise TrainingError(f"non-finite gradient in {group.name}.{k}")
        self.step_count += 1
        t = self.step_count
        for group in groups:
            for k, g in grads.get(group.name, {}).items():
                m, v = self.moments.get((group.name, k), (np.zeros_like(g), np.zeros_like(g)))
                m = self.beta1 * m + (1 - self.beta1) * g
                v = self.beta2 * v + (1 - self.beta2) * g * g
                self.moments[(group.name, k)] = (m, v)
                m_hat = m / (1 - self.beta1**t)
                v_hat = v / (1 - self.beta2**t)
                group.values[k] = group.values[k] - group.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
