"""Small float64 multilayer perceptrons with hand-written backpropagation.

Hidden layers use a rectifier, the output layer is linear. Inputs may be a
single vector ``(d,)`` or a batch ``(..., d)``; parameter gradients from a
batch are summed over all leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Input or gradient buffer does not match the network's dimensions."""


@dataclass
class Mlp:
    weights: List[np.ndarray]  # each (fan_in, fan_out)
    biases: List[np.ndarray]  # each (fan_out,)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} input {w.shape[0]} != previous output")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator, zero_output: bool = False) -> "Mlp":
        """He-uniform fan-in initialisation, zero biases."""
        ws, bs = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / n_in)
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            if zero_output and i == len(sizes) - 2:
                w = np.zeros((n_in, n_out))
            ws.append(w)
            bs.append(np.zeros(n_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "Mlp":
        return cls(
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )

    @property
    def sizes(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def sq_norm(self) -> float:
        return float(sum(np.sum(p * p) for p in self.params()))

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "layers": [
                {"weights": w.ravel().tolist(), "biases": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        sizes = d["sizes"]
        ws, bs = [], []
        for (a, b), layer in zip(zip(sizes[:-1], sizes[1:]), d["layers"]):
            ws.append(np.asarray(layer["weights"], dtype=np.float64).reshape(a, b))
            bs.append(np.asarray(layer["biases"], dtype=np.float64))
        return cls(ws, bs)


@dataclass
class GradientTape:
    """Gradients with the same layout as an :class:`Mlp`, plus the input gradient."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    inputs: Optional[np.ndarray] = None

    @classmethod
    def zeros_like(cls, net: Mlp) -> "GradientTape":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def add_(self, other: "GradientTape", scale: float = 1.0) -> "GradientTape":
        for a, b in zip(self.params(), other.params()):
            a += scale * b
        return self


def _check_input(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (net.n_in,):
        raise ShapeError(f"input has shape {x.shape}, network expects last dim {net.n_in}")
    return x


def forward(net: Mlp, x) -> np.ndarray:
    a = _check_input(net, x)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a


def forward_cached(net: Mlp, x) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Forward pass that also returns each layer's input, for :func:`backward_cached`."""
    a = _check_input(net, x)
    acts = []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        acts.append(a)
        a = a @ w + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a, acts


def backward_cached(net: Mlp, acts: List[np.ndarray], upstream) -> GradientTape:
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != acts[0].shape[:-1] + (net.n_out,):
        raise ShapeError(f"upstream has shape {g.shape}, expected {acts[0].shape[:-1] + (net.n_out,)}")
    n = len(net.weights)
    gw: List[np.ndarray] = [None] * n
    gb: List[np.ndarray] = [None] * n
    for i in range(n - 1, -1, -1):
        a_in = acts[i].reshape(-1, acts[i].shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gw[i] = a_in.T @ g2
        gb[i] = g2.sum(axis=0)
        g = g @ net.weights[i].T
        if i > 0:
            # acts[i] is the rectified output of layer i-1
            g = g * (acts[i] > 0.0)
    return GradientTape(gw, gb, g)


def backward(net: Mlp, x, upstream) -> GradientTape:
    """Reverse-mode gradient of ``sum(upstream * forward(net, x))``."""
    _, acts = forward_cached(net, x)
    return backward_cached(net, acts, upstream)


def sgd_step(net: Mlp, tape: GradientTape, lr: float, l2: float = 0.0) -> Mlp:
    """In-place update ``p -= lr * (grad + l2 * p)``; returns ``net``."""
    if lr <= 0 or l2 < 0:
        raise ValueError("sgd_step needs lr > 0 and l2 >= 0")
    if [w.shape for w in tape.weights] != [w.shape for w in net.weights]:
        raise ShapeError("gradient tape does not match network")
    for p, g in zip(net.params(), tape.params()):
        p -= lr * (g + l2 * p)
    return net
