"""Dense feed-forward networks with exact reverse-mode gradients.

Weights live in a single flat float64 vector.  Layout is layer-major: for each
layer the ``(output_width, input_width)`` weight matrix in row-major order,
followed by the bias.  A layer computes ``y = act(x @ W.T + b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("linear", "relu", "leaky_relu", "tanh", "sigmoid")
_TINY = np.finfo(np.float64).tiny
_ONE_MINUS = 1.0 - np.finfo(np.float64).epsneg


class ShapeError(ValueError):
    """Raised when arrays do not match the network they are used with."""


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "linear"
    slope: float = 0.2

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky_relu slope must lie in (0, 1)")

    @property
    def n_params(self) -> int:
        return self.input_width * self.output_width + self.output_width


@dataclass(frozen=True)
class MlpNetwork:
    layers: tuple[LayerSpec, ...]
    role: str = "generator"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if self.role not in ("generator", "discriminator"):
            raise ValueError(f"unknown role {self.role!r}")
        for k, (a, b) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if a.output_width != b.input_width:
                raise ValueError(
                    f"layer {k} outputs {a.output_width} but layer {k + 1} "
                    f"expects {b.input_width}"
                )
        last = self.layers[-1]
        if self.role == "generator" and last.activation != "sigmoid":
            raise ValueError("generator output layer must be sigmoid")
        if self.role == "discriminator":
            if last.output_width != 1 or last.activation != "linear":
                raise ValueError("discriminator must end in a linear layer of width 1")

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def output_width(self) -> int:
        return self.layers[-1].output_width

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "layers": [
                {
                    "input_width": l.input_width,
                    "output_width": l.output_width,
                    "activation": l.activation,
                    "slope": l.slope,
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpNetwork":
        return cls(tuple(LayerSpec(**l) for l in d["layers"]), role=d["role"])


def _chain(widths: Sequence[int], hidden_act: str, final_act: str, slope: float):
    layers = []
    for k in range(len(widths) - 1):
        act = final_act if k == len(widths) - 2 else hidden_act
        layers.append(LayerSpec(widths[k], widths[k + 1], act, slope))
    return tuple(layers)


def generator_net(latent_dim: int, output_width: int, hidden=(64, 128), slope=0.2) -> MlpNetwork:
    widths = (latent_dim, *hidden, output_width)
    return MlpNetwork(_chain(widths, "leaky_relu", "sigmoid", slope), role="generator")


def discriminator_net(input_width: int, hidden=(128, 64), slope=0.2) -> MlpNetwork:
    widths = (input_width, *hidden, 1)
    return MlpNetwork(_chain(widths, "leaky_relu", "linear", slope), role="discriminator")


@dataclass
class ForwardTrace:
    """Per-layer inputs and pre-activations cached by :func:`forward`."""

    inputs: list
    pre: list

    @property
    def batch_size(self) -> int:
        return self.inputs[0].shape[0]


def unflatten(net: MlpNetwork, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split ``theta`` into per-layer ``(W, b)`` views (no copies)."""
    theta = np.asarray(theta)
    if theta.ndim != 1 or theta.shape[0] != net.n_params:
        raise ShapeError(f"parameter vector has shape {theta.shape}, network needs ({net.n_params},)")
    out = []
    pos = 0
    for layer in net.layers:
        n_w = layer.input_width * layer.output_width
        W = theta[pos:pos + n_w].reshape(layer.output_width, layer.input_width)
        pos += n_w
        b = theta[pos:pos + layer.output_width]
        pos += layer.output_width
        out.append((W, b))
    return out


def flatten(params: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params]).astype(np.float64)


def init_weights(net: MlpNetwork, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = []
    for layer in net.layers:
        limit = np.sqrt(6.0 / (layer.input_width + layer.output_width))
        W = rng.uniform(-limit, limit, size=(layer.output_width, layer.input_width))
        params.append((W, np.zeros(layer.output_width)))
    return flatten(params)


def _activate(layer: LayerSpec, a: np.ndarray) -> np.ndarray:
    act = layer.activation
    if act == "linear":
        return a
    if act == "relu":
        return np.maximum(a, 0.0)
    if act == "leaky_relu":
        return np.where(a > 0, a, layer.slope * a)
    if act == "tanh":
        return np.tanh(a)
    # stable logistic, kept strictly inside (0, 1) in float64
    e = np.exp(-np.abs(a))
    h = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(h, _TINY, _ONE_MINUS)


def _activation_grad(layer: LayerSpec, a: np.ndarray, h: np.ndarray) -> np.ndarray:
    act = layer.activation
    if act == "linear":
        return np.ones_like(a)
    if act == "relu":
        return (a > 0).astype(np.float64)
    if act == "leaky_relu":
        return np.where(a > 0, 1.0, layer.slope)
    if act == "tanh":
        return 1.0 - h * h
    return h * (1.0 - h)


def forward(net: MlpNetwork, theta: np.ndarray, batch: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"batch must be 2-D, got shape {x.shape}")
    inputs, pre = [], []
    for k, (layer, (W, b)) in enumerate(zip(net.layers, unflatten(net, theta))):
        if x.shape[1] != layer.input_width:
            raise ShapeError(
                f"layer {k} expects input width {layer.input_width}, got {x.shape[1]}"
            )
        inputs.append(x)
        a = x @ W.T + b
        pre.append(a)
        x = _activate(layer, a)
    return x, ForwardTrace(inputs, pre)


def backward(
    net: MlpNetwork,
    theta: np.ndarray,
    trace: ForwardTrace,
    output_grad: np.ndarray,
    *,
    with_input_grad: bool = False,
):
    """Gradient of ``sum(output * output_grad)`` with respect to ``theta``.

    With ``with_input_grad`` the gradient with respect to the network input is
    returned as a second value.
    """
    params = unflatten(net, theta)
    delta = np.asarray(output_grad, dtype=np.float64)
    expected = (trace.batch_size, net.output_width)
    if delta.shape != expected:
        raise ShapeError(f"output_grad has shape {delta.shape}, expected {expected}")
    if len(trace.pre) != len(net.layers):
        raise ShapeError("trace does not belong to this network")
    grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        W, _ = params[k]
        a = trace.pre[k]
        h = trace.inputs[k + 1] if k + 1 < len(net.layers) else _activate(layer, a)
        delta = delta * _activation_grad(layer, a, h)
        grads[k] = (delta.T @ trace.inputs[k], delta.sum(axis=0))
        if k > 0 or with_input_grad:
            delta = delta @ W
    g = flatten(grads)
    if with_input_grad:
        return g, delta
    return g


def param_arithmetic(a: np.ndarray, b, op: str) -> np.ndarray:
    """Elementwise parameter-vector arithmetic; ``scale`` takes a scalar ``b``."""
    a = np.asarray(a, dtype=np.float64)
    if op == "scale":
        return a * float(b)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "elementwise":
        return a * b
    raise ValueError(f"unknown op {op!r}")
