"""Dense ReLU networks with exact backpropagation and momentum SGD.

Everything runs in float64. Inputs are row-major batches of shape
``(n, layer_dims[0])``; weight matrices have shape ``(fan_out, fan_in)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError


@dataclass
class NetworkParams:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # bumped on every in-place update so stale forward caches are detectable
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match layer_dims")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            fan_in, fan_out = self.layer_dims[l], self.layer_dims[l + 1]
            if w.shape != (fan_out, fan_in):
                raise ValueError(f"weights[{l}] has shape {w.shape}, expected {(fan_out, fan_in)}")
            if b.shape != (fan_out,):
                raise ValueError(f"biases[{l}] has shape {b.shape}, expected {(fan_out,)}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(w).all() and np.isfinite(b).all() for w, b in zip(self.weights, self.biases))

    def equal(self, other: "NetworkParams") -> bool:
        """Bitwise equality of architecture and values."""
        if self.layer_dims != other.layer_dims:
            return False
        return all(
            np.array_equal(a, b)
            for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def is_finite(self) -> bool:
        return all(np.isfinite(g).all() for g in self.weights + self.biases)

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.weights + self.biases])


@dataclass
class ForwardCache:
    owner: NetworkParams
    version: int
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]


@dataclass
class OptimizerState:
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity_w: list[np.ndarray] | None = None
    velocity_b: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def _check_dims(layer_dims) -> list[int]:
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("layer_dims needs at least an input and an output size")
    if any(d < 1 for d in dims):
        raise ValueError(f"layer_dims entries must be >= 1, got {dims}")
    return dims


def init_params(layer_dims, seed: int | np.random.Generator = 0) -> NetworkParams:
    """He-uniform weights on (-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
    dims = _check_dims(layer_dims)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(dims, weights, biases)


def relu(x):
    return np.maximum(x, 0.0)


def forward(params: NetworkParams, x_batch) -> tuple[np.ndarray, ForwardCache]:
    """Return ``(logits, cache)``; hidden layers use ReLU, the output layer is affine."""
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.layer_dims[0]:
        raise ValueError(f"input has shape {x.shape}, expected (n, {params.layer_dims[0]})")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")

    pre, acts = [], []
    a = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if l == last else relu(z)
        acts.append(a)
    return a, ForwardCache(params, params.version, x, pre, acts)


def predict_logits(params: NetworkParams, x_batch) -> np.ndarray:
    return forward(params, x_batch)[0]


def backward(params: NetworkParams, cache: ForwardCache, grad_logits) -> tuple[GradientSet, np.ndarray]:
    """Backpropagate ``dL/dlogits`` through the cached forward pass.

    Returns the parameter gradients and the gradient with respect to the inputs.
    """
    if cache.owner is not params or cache.version != params.version:
        raise ValueError("stale forward cache: parameters changed since the forward pass")
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.activations[-1].shape:
        raise ValueError(f"grad_logits has shape {g.shape}, expected {cache.activations[-1].shape}")

    n = params.n_layers
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for l in range(n - 1, -1, -1):
        if l < n - 1:
            g = g * (cache.pre_activations[l] > 0)
        a_prev = cache.inputs if l == 0 else cache.activations[l - 1]
        gw[l] = g.T @ a_prev
        gb[l] = g.sum(axis=0)
        g = g @ params.weights[l]
    return GradientSet(gw, gb), g


def sgd_step(params: NetworkParams, grads: GradientSet, state: OptimizerState) -> None:
    """In-place momentum SGD with coupled weight decay.

    v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
    """
    if not grads.is_finite():
        raise NumericalError("non-finite gradient; SGD step aborted")
    if state.velocity_w is None:
        state.velocity_w = [np.zeros_like(w) for w in params.weights]
        state.velocity_b = [np.zeros_like(b) for b in params.biases]
    for l in range(params.n_layers):
        for p, g, v in (
            (params.weights[l], grads.weights[l], state.velocity_w[l]),
            (params.biases[l], grads.biases[l], state.velocity_b[l]),
        ):
            if g.shape != p.shape or v.shape != p.shape:
                raise ValueError("gradient/velocity shape does not match parameters")
            v *= state.momentum
            v += g
            if state.weight_decay:
                v += state.weight_decay * p
            p -= state.learning_rate * v
    params.version += 1
