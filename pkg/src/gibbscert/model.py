"""Minimal feed-forward hypothesis class with exact gradients.

Networks are fully-connected stacks with a leaky-ReLU activation after every
layer except the last, which feeds a softmax over the label set.  Parameters
live in one flat vector so that samplers and complexity measures can treat a
hypothesis as a point in R^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

# Bounded cross entropy: -1/4 ln(e^-4 + (1 - 2 e^-4) p_y), which maps the
# assigned probability p_y in [0, 1] onto a loss in [0, 1].
BCE_FLOOR = math.exp(-4.0)
_BCE_SPAN = 1.0 - 2.0 * BCE_FLOOR


class LossKind(Enum):
    ZERO_ONE = "zero_one"
    BOUNDED_CE = "bounded_ce"


@dataclass(frozen=True)
class Architecture:
    """Layer widths (input, hidden..., labels) plus the leaky-ReLU slope."""

    layer_dims: tuple[int, ...]
    leaky_slope: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2:
            raise ValueError("architecture needs at least input and output dims")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"all layer dims must be >= 1, got {self.layer_dims}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ValueError(f"leaky_slope must lie in [0, 1), got {self.leaky_slope}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_labels(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        """Weight-matrix shapes, each (fan_out, fan_in)."""
        dims = self.layer_dims
        return [(dims[i + 1], dims[i]) for i in range(self.n_layers)]

    @cached_property
    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    @cached_property
    def layer_slices(self) -> tuple[tuple[slice, slice], ...]:
        """Per layer: (weight slice, bias slice) into the flat vector."""
        out = []
        start = 0
        for o, i in self.layer_shapes():
            w = slice(start, start + o * i)
            b = slice(start + o * i, start + o * i + o)
            out.append((w, b))
            start = b.stop
        return tuple(out)


@dataclass
class ParamVector:
    """Flat hypothesis weights with the layout needed to view them per layer."""

    arch: Architecture
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.arch.param_count,):
            raise ValueError(
                f"expected {self.arch.param_count} parameters, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector contains non-finite entries")

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views per layer; W has shape (fan_out, fan_in)."""
        shapes = self.arch.layer_shapes()
        out = []
        for (w_sl, b_sl), (o, i) in zip(self.arch.layer_slices, shapes):
            out.append((self.values[w_sl].reshape(o, i), self.values[b_sl]))
        return out

    def copy(self) -> "ParamVector":
        return ParamVector(self.arch, self.values.copy())


def init_params(arch: Architecture, seed) -> ParamVector:
    """Glorot-uniform weights; biases uniform in +-1/sqrt(fan_in). Seeded."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    values = np.empty(arch.param_count)
    for (w_sl, b_sl), (o, i) in zip(arch.layer_slices, arch.layer_shapes()):
        limit = math.sqrt(6.0 / (i + o))
        values[w_sl] = rng.uniform(-limit, limit, o * i)
        b_range = 1.0 / math.sqrt(i)
        values[b_sl] = rng.uniform(-b_range, b_range, o)
    return ParamVector(arch, values)


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0.0, z, slope * z)


def _leaky_deriv(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0.0, 1.0, slope)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_pass_raw(params: ParamVector, X: np.ndarray):
    """(pre-activations, post-activations) per layer, no terminal softmax."""
    slope = params.arch.leaky_slope
    layers = params.layers()
    acts = [X]
    pre = []
    for idx, (W, b) in enumerate(layers):
        z = acts[-1] @ W.T + b
        pre.append(z)
        if idx < len(layers) - 1:
            acts.append(_leaky(z, slope))
    return pre, acts


def _forward_pass(params: ParamVector, X: np.ndarray):
    pre, acts = _forward_pass_raw(params, X)
    return pre, acts, _softmax(pre[-1])


def predict_proba(params: ParamVector, X: np.ndarray) -> np.ndarray:
    """Softmax outputs for a batch of inputs, shape (n, n_labels)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.arch.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} does not match architecture dim {params.arch.input_dim}"
        )
    return _forward_pass(params, X)[2]


def forward(params: ParamVector, x: np.ndarray) -> np.ndarray:
    """Probability vector over labels for a single input."""
    return predict_proba(params, np.asarray(x, dtype=float).reshape(1, -1))[0]


def predict_labels(params: ParamVector, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(params, X), axis=1)


def loss(kind: LossKind, prediction: np.ndarray, y: int) -> float:
    """Single-example loss in [0, 1] for a probability vector and true label."""
    prediction = np.asarray(prediction, dtype=float)
    if not 0 <= y < prediction.shape[-1]:
        raise ValueError(f"label {y} out of range for {prediction.shape[-1]} classes")
    if kind is LossKind.ZERO_ONE:
        return float(np.argmax(prediction) != y)
    return float(-0.25 * np.log(BCE_FLOOR + _BCE_SPAN * prediction[y]))


def empirical_risk(params: ParamVector, X: np.ndarray, y: np.ndarray, kind: LossKind) -> float:
    """Mean loss over a sample. Errors on an empty sample."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if len(X) == 0:
        raise ValueError("empirical risk of an empty sample is undefined")
    probs = predict_proba(params, X)
    if kind is LossKind.ZERO_ONE:
        return float(np.mean(np.argmax(probs, axis=1) != y))
    p_true = probs[np.arange(len(y)), y]
    return float(np.mean(-0.25 * np.log(BCE_FLOOR + _BCE_SPAN * p_true)))


def risk_gradient(params: ParamVector, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient of the mean bounded-cross-entropy loss on a batch.

    The 01-loss has no useful gradient; callers wanting it get a ValueError
    from grad() below.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    if len(X) == 0:
        raise ValueError("gradient of an empty batch is undefined")
    arch = params.arch
    layers = params.layers()
    pre, acts, probs = _forward_pass(params, X)
    n = len(X)

    p_true = probs[np.arange(n), y]
    # d(mean loss)/d p_y, one scalar per example.
    coef = -0.25 * _BCE_SPAN / (BCE_FLOOR + _BCE_SPAN * p_true) / n
    scale = coef * p_true
    delta = -scale[:, None] * probs
    delta[np.arange(n), y] += scale

    grad_flat = np.zeros(arch.param_count)
    for idx in range(arch.n_layers - 1, -1, -1):
        W, _ = layers[idx]
        w_sl, b_sl = arch.layer_slices[idx]
        grad_flat[w_sl] = (delta.T @ acts[idx]).ravel()
        grad_flat[b_sl] = delta.sum(axis=0)
        if idx > 0:
            delta = (delta @ W) * _leaky_deriv(pre[idx - 1], arch.leaky_slope)
    return grad_flat


def grad(params: ParamVector, X: np.ndarray, y: np.ndarray, kind: LossKind) -> np.ndarray:
    if kind is not LossKind.BOUNDED_CE:
        raise ValueError("only the bounded cross entropy is differentiable")
    return risk_gradient(params, X, y)


def forward_squared_allones(params: ParamVector) -> np.ndarray:
    """Run the network with every weight and bias squared on the all-ones input.

    The terminal softmax is skipped: the outputs are the raw accumulated
    path products, so they are nonnegative and sum to the path norm.
    """
    slope = params.arch.leaky_slope
    layers = params.layers()
    a = np.ones(params.arch.input_dim)
    for idx, (W, b) in enumerate(layers):
        z = (W * W) @ a + b * b
        a = _leaky(z, slope) if idx < len(layers) - 1 else z
    return a


def squared_allones_output_gradient(params: ParamVector) -> np.ndarray:
    """Gradient of sum(forward_squared_allones(params)) w.r.t. the raw params."""
    arch = params.arch
    slope = arch.leaky_slope
    layers = params.layers()
    a = np.ones(arch.input_dim)
    acts = [a]
    pre = []
    for idx, (W, b) in enumerate(layers):
        z = (W * W) @ a + b * b
        pre.append(z)
        a = _leaky(z, slope) if idx < len(layers) - 1 else z
        acts.append(a)

    grad_flat = np.zeros(arch.param_count)
    delta = np.ones(arch.n_labels)
    for idx in range(arch.n_layers - 1, -1, -1):
        W, b = layers[idx]
        w_sl, b_sl = arch.layer_slices[idx]
        # Chain rule through the squaring of each parameter.
        grad_w_sq = np.outer(delta, acts[idx])
        grad_flat[w_sl] = (2.0 * W * grad_w_sq).ravel()
        grad_flat[b_sl] = 2.0 * b * delta
        if idx > 0:
            delta = (delta @ (W * W)) * _leaky_deriv(pre[idx - 1], slope)
    return grad_flat


def rescale_layer_pair(params: ParamVector, layer: int, c: float) -> ParamVector:
    """Scale layer's weights and biases by c and the next layer's weights by 1/c.

    Because the leaky ReLU is positively homogeneous this leaves the network
    function unchanged for any c > 0 while moving weight norms around.
    """
    if c <= 0.0:
        raise ValueError(f"rescaling factor must be positive, got {c!r}")
    if not 0 <= layer < params.arch.n_layers - 1:
        raise ValueError(f"layer {layer} has no successor to rescale against")
    values = params.values.copy()
    w_sl, b_sl = params.arch.layer_slices[layer]
    w_next, _ = params.arch.layer_slices[layer + 1]
    values[w_sl] *= c
    values[b_sl] *= c
    values[w_next] /= c
    return ParamVector(params.arch, values)
