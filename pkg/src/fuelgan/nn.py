"""Small dense-network engine with hand-written backpropagation.

Everything is float64 numpy. Parameters live on the layers; gradients are
returned as lists aligned with :meth:`Network.parameters`, and optimizers
update the parameter arrays in place.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, DimensionError, StateError, shape_mismatch

ACTIVATIONS = ("tanh", "leaky_relu", "sigmoid", "identity")
BCE_EPS = 1e-7


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; same seed gives the same stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(z: np.ndarray, kind: str, slope: float) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str, slope: float) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    return np.ones_like(z)


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def he_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, slope: float = 0.0) -> np.ndarray:
    gain = np.sqrt(2.0 / (1.0 + slope**2))
    limit = gain * np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class DenseLayer:
    """Affine map followed by an elementwise activation.

    ``weights`` has shape (out, in), so a batch ``x`` maps to
    ``activation(x @ weights.T + biases)``.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "identity"
    negative_slope: float = 0.2

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise shape_mismatch("dense layer weights/biases", self.weights.shape, self.biases.shape)

    @classmethod
    def init(cls, fan_in: int, fan_out: int, activation: str, rng: np.random.Generator,
             negative_slope: float = 0.2) -> "DenseLayer":
        if activation == "leaky_relu":
            w = he_uniform(fan_in, fan_out, rng, negative_slope)
        else:
            w = glorot_uniform(fan_in, fan_out, rng)
        return cls(w, np.zeros(fan_out), activation, negative_slope)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise shape_mismatch("dense_forward input vs weights", x.shape, self.weights.shape)
        z = x @ self.weights.T + self.biases
        a = _activate(z, self.activation, self.negative_slope)
        return a, (x, z, a)

    def backward(self, grad_out: np.ndarray, cache):
        x, z, a = cache
        dz = grad_out * _activation_grad(z, a, self.activation, self.negative_slope)
        return dz @ self.weights, dz.T @ x, dz.sum(axis=0)


@dataclass(frozen=True)
class DropoutSpec:
    """Inverted dropout; only active when the forward pass is in training mode."""

    rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.rate}")


Layer = Union[DenseLayer, DropoutSpec]


def dense_forward(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    return layer.forward(np.asarray(x, dtype=np.float64))[0]


def dropout_forward(x: np.ndarray, spec: DropoutSpec, training: bool, rng: np.random.Generator | None):
    """Return ``(output, mask)`` with ``output == x * mask``.

    In training each element is dropped with probability ``spec.rate`` and
    survivors are scaled by ``1 / (1 - rate)``; otherwise the mask is all ones.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 <= spec.rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {spec.rate}")
    if not training or spec.rate == 0.0:
        mask = np.ones_like(x)
        return x.copy(), mask
    if rng is None:
        raise StateError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= spec.rate
    mask = keep / (1.0 - spec.rate)
    return x * mask, mask


def bce_loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy, predictions clamped to [1e-7, 1 - 1e-7]."""
    p, t = _check_bce(predictions, targets)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)))


def bce_grad(predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of :func:`bce_loss` with respect to the (unclamped) predictions."""
    p, t = _check_bce(predictions, targets)
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    g = (pc - t) / (pc * (1.0 - pc)) / p.shape[0]
    return np.where(inside, g, 0.0)


def _check_bce(predictions, targets):
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.size == 0:
        raise ValueError("bce_loss of an empty batch")
    if p.shape != t.shape:
        raise shape_mismatch("bce predictions vs targets", p.shape, t.shape)
    return p, t


@dataclass
class ForwardCache:
    input: np.ndarray
    entries: list = field(default_factory=list)  # per layer: dense cache or dropout mask
    output: np.ndarray | None = None


class Network:
    """A sequential stack of dense and dropout layers."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)

    @property
    def dense_layers(self) -> list[DenseLayer]:
        return [l for l in self.layers if isinstance(l, DenseLayer)]

    @property
    def in_dim(self) -> int:
        return self.dense_layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.dense_layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.dense_layers:
            params += [layer.weights, layer.biases]
        return params

    def copy(self) -> "Network":
        layers = [
            DenseLayer(l.weights.copy(), l.biases.copy(), l.activation, l.negative_slope)
            if isinstance(l, DenseLayer) else l
            for l in self.layers
        ]
        return Network(layers)

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None):
        x = np.asarray(x, dtype=np.float64)
        cache = ForwardCache(input=x)
        h = x
        for layer in self.layers:
            if isinstance(layer, DenseLayer):
                h, c = layer.forward(h)
                cache.entries.append(c)
            else:
                h, mask = dropout_forward(h, layer, training, rng)
                cache.entries.append(mask)
        cache.output = h
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, training=False)[0]

    def backward(self, cache: ForwardCache | None, upstream: np.ndarray):
        """Return ``(param_grads, grad_input)`` for the cached forward pass."""
        if cache is None or len(cache.entries) != len(self.layers) or cache.output is None:
            raise StateError("backward called without a matching forward cache")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != cache.output.shape:
            raise shape_mismatch("upstream gradient vs network output", upstream.shape, cache.output.shape)
        grads: list[np.ndarray] = []
        g = upstream
        for layer, entry in zip(reversed(self.layers), reversed(cache.entries)):
            if isinstance(layer, DenseLayer):
                g, dw, db = layer.backward(g, entry)
                grads += [db, dw]
            else:
                g = g * entry
        grads.reverse()
        return grads, g


def backward(network: Network, cache: ForwardCache | None, upstream: np.ndarray) -> list[np.ndarray]:
    return network.backward(cache, upstream)[0]


def _check_pairs(params, grads):
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise shape_mismatch("parameter vs gradient", p.shape, g.shape)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    _check_pairs(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    _check_pairs(state.m, params)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


@dataclass
class SgdState:
    learning_rate: float = 0.01

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError(f"sgd learning rate must be non-negative, got {self.learning_rate}")


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], state: SgdState,
             direction: str = "descend"):
    """Plain gradient step in place; ``direction`` is ``descend`` or ``ascend``."""
    _check_pairs(params, grads)
    if direction not in ("descend", "ascend"):
        raise ConfigError(f"direction must be 'descend' or 'ascend', got {direction!r}")
    sign = -1.0 if direction == "descend" else 1.0
    for p, g in zip(params, grads):
        p += sign * state.learning_rate * g
    return params
