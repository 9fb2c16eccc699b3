"""Small conv1d + dense Q-network with hand-written backprop and plain SGD."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ValidationError
from . import kernels

KINDS = ("conv1d", "dense")
ACTIVATIONS = ("relu", "linear", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int
    kernel_width: int = 1
    stride: int = 1
    padding: int = 0
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.units < 1 or self.kernel_width < 1 or self.stride < 1 or self.padding < 0:
            raise ValidationError(f"invalid layer sizes in {self}")

    def to_dict(self) -> dict:
        return asdict(self)


def conv_output_extent(input_extent: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    """Output length of a convolution; non-integral extents are rejected."""
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    span = input_extent - kernel + 2 * padding
    if span < 0:
        raise ValidationError(
            f"kernel {kernel} does not fit input {input_extent} with padding {padding}"
        )
    if span % stride:
        raise ValidationError(
            f"({input_extent} - {kernel} + 2*{padding}) is not divisible by stride {stride}"
        )
    return span // stride + 1


def mac_count(specs: Sequence[LayerSpec], input_length: int, in_channels: int = 1) -> int:
    """Multiply-accumulate count of the convolutional layers (dense layers excluded).

    For 1-D layers the filter height and output height are both 1.
    """
    total = 0
    channels, extent = in_channels, input_length
    for spec in specs:
        if spec.kind != "conv1d":
            continue
        out = conv_output_extent(extent, spec.kernel_width, spec.stride, spec.padding)
        total += channels * spec.kernel_width * 1 * spec.units * out * 1
        channels, extent = spec.units, out
    return total


def default_architecture(
    n_actions: int,
    filters: int = 128,
    conv_layers: int = 2,
    kernel_width: int = 3,
    dense: Sequence[int] = (128, 64),
    output_activation: str = "linear",
) -> tuple[LayerSpec, ...]:
    specs = [LayerSpec("conv1d", filters, kernel_width, 1, 0, "relu") for _ in range(conv_layers)]
    specs += [LayerSpec("dense", u, activation="relu") for u in dense]
    specs.append(LayerSpec("dense", n_actions, activation=output_activation))
    return tuple(specs)


def layer_shapes(specs: Sequence[LayerSpec], input_length: int, in_channels: int = 1) -> list[tuple]:
    """Output shape (without batch) of every layer; validates the chain."""
    shapes: list[tuple] = []
    channels, extent = in_channels, input_length
    flat: Optional[int] = None
    for idx, spec in enumerate(specs):
        if spec.activation == "softmax" and idx != len(specs) - 1:
            raise ValidationError("softmax is only supported on the output layer")
        if spec.kind == "conv1d":
            if flat is not None:
                raise ValidationError("conv1d layers must precede dense layers")
            extent = conv_output_extent(extent, spec.kernel_width, spec.stride, spec.padding)
            channels = spec.units
            shapes.append((channels, extent))
        else:
            flat = spec.units
            shapes.append((flat,))
    if not specs or specs[-1].kind != "dense":
        raise ValidationError("the network must end in a dense layer")
    return shapes


@dataclass
class NetworkParams:
    specs: tuple[LayerSpec, ...]
    input_length: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: Optional[int] = None
    in_channels: int = 1

    @property
    def n_outputs(self) -> int:
        return self.specs[-1].units

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.specs, self.input_length,
            [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            self.seed, self.in_channels,
        )

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "NetworkParams":
        return NetworkParams(
            self.specs, self.input_length,
            [np.array(a, dtype=float) for a in arrays[0::2]],
            [np.array(a, dtype=float) for a in arrays[1::2]],
            self.seed, self.in_channels,
        )


def param_shapes(specs: Sequence[LayerSpec], input_length: int, in_channels: int = 1) -> list[tuple]:
    outs = layer_shapes(specs, input_length, in_channels)
    shapes: list[tuple] = []
    prev: tuple = (in_channels, input_length)
    for spec, out in zip(specs, outs):
        if spec.kind == "conv1d":
            shapes += [(spec.units, prev[0], spec.kernel_width), (spec.units,)]
        else:
            fan_in = int(np.prod(prev))
            shapes += [(spec.units, fan_in), (spec.units,)]
        prev = out
    return shapes


def init_network(
    specs: Sequence[LayerSpec], input_length: int, seed: int = 0, in_channels: int = 1
) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    specs = tuple(specs)
    rng = np.random.default_rng(seed)
    shapes = param_shapes(specs, input_length, in_channels)
    weights, biases = [], []
    for w_shape, b_shape in zip(shapes[0::2], shapes[1::2]):
        if len(w_shape) == 3:
            fan_in, fan_out = w_shape[1] * w_shape[2], w_shape[0] * w_shape[2]
        else:
            fan_in, fan_out = w_shape[1], w_shape[0]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=w_shape))
        biases.append(np.zeros(b_shape))
    return NetworkParams(specs, input_length, weights, biases, seed, in_channels)


def _as_batch(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_channels * params.input_length:
        raise ValidationError(
            f"expected input length {params.in_channels * params.input_length}, got shape {x.shape}"
        )
    return x, single


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(params: NetworkParams, x: np.ndarray):
    a = np.ascontiguousarray(x.reshape(x.shape[0], params.in_channels, params.input_length))
    cache = []
    for spec, w, b in zip(params.specs, params.weights, params.biases):
        if spec.kind == "conv1d":
            z = kernels.conv1d_forward(a, w, b, spec.stride, spec.padding)
        else:
            if a.ndim == 3:
                a = a.reshape(a.shape[0], -1)
            z = a @ w.T + b
        cache.append((a, z))
        if spec.activation == "relu":
            a = np.maximum(z, 0.0)
        elif spec.activation == "softmax":
            a = _softmax(z)
        else:
            a = z
    return a, cache


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Q-values for one input vector or a batch of them (rows)."""
    xb, single = _as_batch(params, x)
    q, _ = _forward_cached(params, xb)
    return q[0] if single else q


def loss_and_gradient(
    params: NetworkParams, x: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean of ``(target - q[action])**2`` over the batch and its gradient.

    Only the taken action's head receives an error signal.  Gradients are
    ordered like :meth:`NetworkParams.arrays`.
    """
    xb, _ = _as_batch(params, x)
    actions = np.asarray(actions, dtype=np.intp).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n = xb.shape[0]
    if len(actions) != n or len(targets) != n:
        raise ValidationError("actions and targets must match the batch size")
    if (actions < 0).any() or (actions >= params.n_outputs).any():
        raise ValidationError("target index out of range")
    q, cache = _forward_cached(params, xb)
    rows = np.arange(n)
    err = q[rows, actions] - targets
    loss = float(np.mean(err ** 2))

    grad_a = np.zeros_like(q)
    grad_a[rows, actions] = 2.0 * err / n
    grads: list[np.ndarray] = [None] * (2 * len(params.specs))  # type: ignore[list-item]
    for idx in range(len(params.specs) - 1, -1, -1):
        spec, w = params.specs[idx], params.weights[idx]
        a_in, z = cache[idx]
        if spec.activation == "relu":
            grad_z = grad_a * (z > 0)
        elif spec.activation == "softmax":
            s = _softmax(z)
            grad_z = s * (grad_a - np.sum(grad_a * s, axis=1, keepdims=True))
        else:
            grad_z = grad_a
        if spec.kind == "conv1d":
            grad_in, dw, db = kernels.conv1d_backward(
                a_in, w, np.ascontiguousarray(grad_z), spec.stride, spec.padding
            )
        else:
            dw = grad_z.T @ a_in
            db = grad_z.sum(axis=0)
            grad_in = grad_z @ w
        grads[2 * idx], grads[2 * idx + 1] = dw, db
        if idx > 0:
            prev = params.specs[idx - 1]
            if prev.kind == "conv1d" and spec.kind == "dense":
                grad_in = grad_in.reshape(cache[idx - 1][1].shape)
            grad_a = grad_in
    return loss, grads


def backward(params: NetworkParams, x: np.ndarray, target_index: int, target_value: float) -> list[np.ndarray]:
    """Gradient of ``(target_value - q[target_index])**2`` for a single input."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("backward takes a single input vector")
    _, grads = loss_and_gradient(params, x[None, :], np.array([target_index]), np.array([target_value]))
    return grads


def sgd_step(params: NetworkParams, gradient: Sequence[np.ndarray], learning_rate: float) -> NetworkParams:
    if not learning_rate > 0:
        raise ValidationError("learning rate must be positive")
    arrays = params.arrays()
    if len(gradient) != len(arrays):
        raise ValidationError("gradient does not match the parameter list")
    for g, p in zip(gradient, arrays):
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise ValidationError("non-finite gradient; step rejected")
    return params.with_arrays([p - learning_rate * g for p, g in zip(arrays, gradient)])


def sgd_step_(params: NetworkParams, gradient: Sequence[np.ndarray], learning_rate: float) -> None:
    """In-place variant of :func:`sgd_step` used by the trainer."""
    arrays = params.arrays()
    for g in gradient:
        if not np.isfinite(g).all():
            raise ValidationError("non-finite gradient; step rejected")
    for p, g in zip(arrays, gradient):
        p -= learning_rate * g


@dataclass
class GradientReport:
    analytic: list[np.ndarray]
    numeric: list[np.ndarray]
    max_rel_discrepancy: float = field(default=0.0)


def min_preactivation(params: NetworkParams, x: np.ndarray) -> float:
    """Smallest |pre-activation| over all ReLU units, for kink avoidance."""
    xb, _ = _as_batch(params, x)
    _, cache = _forward_cached(params, xb)
    mags = [np.abs(z).min() for spec, (_, z) in zip(params.specs, cache) if spec.activation == "relu"]
    return float(min(mags)) if mags else math.inf


def gradient_check(
    params: NetworkParams,
    x: np.ndarray,
    target_index: int,
    target_value: float,
    step: float = 1e-4,
    floor: float = 1e-6,
) -> GradientReport:
    """Compare :func:`backward` with central finite differences of the loss."""
    analytic = backward(params, x, target_index, target_value)

    def loss(p: NetworkParams) -> float:
        return float((target_value - forward(p, x)[target_index]) ** 2)

    work = params.copy()
    arrays = work.arrays()
    numeric = []
    worst = 0.0
    for arr, ana in zip(arrays, analytic):
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss(work)
            flat[k] = orig - step
            down = loss(work)
            flat[k] = orig
            num.reshape(-1)[k] = (up - down) / (2 * step)
        scale = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        worst = max(worst, float(np.max(np.abs(ana - num) / scale)))
        numeric.append(num)
    return GradientReport(analytic, numeric, worst)
