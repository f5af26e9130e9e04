"""Small feed-forward network engine with hand-written reverse-mode gradients.

Networks are described by a :class:`NetworkSpec` (an input shape plus an
ordered list of layer descriptors) and their weights live in a separate
:class:`ParameterSet`. Keeping the two apart lets a policy and its mirror
share one spec while owning independent parameters.

Image inputs are laid out ``(H, W, C)``; every function also accepts a leading
batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

PROB_FLOOR = 1e-12


class SpecError(ValueError):
    """Raised for inconsistent network descriptions."""


class ShapeError(ValueError):
    """Raised when an array does not fit the network it is fed to."""


class NumericalError(ArithmeticError):
    """Raised when an operation produces NaN or Inf."""


# --------------------------------------------------------------------------
# layer vocabulary


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Conv2d:
    """3x3 kernel, stride 1, valid padding."""

    in_channels: int
    out_channels: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2d:
    """2x2 window, stride 2; odd trailing rows/columns are dropped."""


@dataclass(frozen=True)
class Dropout:
    keep_prob: float


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class SoftmaxHead:
    num_classes: int


Layer = Union[Dense, Conv2d, ReLU, MaxPool2d, Dropout, Flatten, SoftmaxHead]

KERNEL = 3
POOL = 2


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]
    head: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()

    @property
    def num_classes(self) -> int:
        if not self.head:
            raise SpecError("network has no softmax head")
        return self.layers[-1].num_classes

    @property
    def output_dim(self) -> int:
        return int(np.prod(self.shapes()[-1]))

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-sample activation shapes: entry i is the input to layer i."""
        if not self.input_shape or any(d <= 0 for d in self.input_shape):
            raise SpecError(f"bad input shape {self.input_shape}")
        if not self.layers:
            raise SpecError("empty layer list")
        heads = [i for i, l in enumerate(self.layers) if isinstance(l, SoftmaxHead)]
        if self.head and heads != [len(self.layers) - 1]:
            raise SpecError("exactly one softmax head is required, in final position")
        if not self.head and heads:
            raise SpecError("headless network contains a softmax head")

        shape = self.input_shape
        out = [shape]
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                if shape != (layer.in_dim,):
                    raise SpecError(f"layer {i}: dense expects ({layer.in_dim},), got {shape}")
                if layer.out_dim <= 0:
                    raise SpecError(f"layer {i}: dense out_dim must be positive")
                shape = (layer.out_dim,)
            elif isinstance(layer, Conv2d):
                if len(shape) != 3 or shape[2] != layer.in_channels:
                    raise SpecError(
                        f"layer {i}: conv2d expects (H, W, {layer.in_channels}), got {shape}")
                h, w = shape[0] - KERNEL + 1, shape[1] - KERNEL + 1
                if h <= 0 or w <= 0 or layer.out_channels <= 0:
                    raise SpecError(f"layer {i}: input {shape} too small for a 3x3 kernel")
                shape = (h, w, layer.out_channels)
            elif isinstance(layer, MaxPool2d):
                if len(shape) != 3 or shape[0] < POOL or shape[1] < POOL:
                    raise SpecError(f"layer {i}: maxpool needs (H>=2, W>=2, C), got {shape}")
                shape = (shape[0] // POOL, shape[1] // POOL, shape[2])
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dropout):
                if not 0.0 < layer.keep_prob <= 1.0:
                    raise SpecError(f"layer {i}: keep_prob must lie in (0, 1]")
            elif isinstance(layer, SoftmaxHead):
                if shape != (layer.num_classes,):
                    raise SpecError(
                        f"softmax head over {layer.num_classes} classes fed with {shape}")
                if layer.num_classes < 2:
                    raise SpecError("softmax head needs at least two classes")
            elif not isinstance(layer, ReLU):
                raise SpecError(f"layer {i}: unknown layer {layer!r}")
            out.append(shape)
        return out

    def feature_index(self) -> int:
        """Index of the layer whose input is the penultimate feature vector.

        With convolutions this is the flattened output of the convolutional
        trunk. Dense-only networks use the input of the last dense layer.
        """
        dense = [i for i, l in enumerate(self.layers) if isinstance(l, Dense)]
        if not dense:
            raise SpecError("network has no dense layer")
        if any(isinstance(l, Conv2d) for l in self.layers):
            flats = [i for i, l in enumerate(self.layers) if isinstance(l, Flatten)]
            if flats:
                return flats[-1] + 1
        return dense[-1]

    @property
    def feature_dim(self) -> int:
        return int(np.prod(self.shapes()[self.feature_index()]))


# --------------------------------------------------------------------------
# tensors and parameter sets


@dataclass(eq=False)
class Tensor:
    values: np.ndarray
    grad: np.ndarray = None

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        elif self.grad.shape != self.values.shape:
            raise ShapeError("grad buffer shape differs from values")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def copy(self) -> "Tensor":
        return Tensor(self.values.copy(), self.grad.copy())


class ParameterSet:
    """Ordered, uniquely named collection of tensors.

    Also used to carry gradients: a gradient set has the same names and
    shapes as the parameters it belongs to.
    """

    def __init__(self, items: Sequence[tuple[str, Tensor]] = ()):
        self._items: dict[str, Tensor] = {}
        for name, tensor in items:
            if name in self._items:
                raise SpecError(f"duplicate parameter name {name!r}")
            self._items[name] = tensor if isinstance(tensor, Tensor) else Tensor(tensor)

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._items.items())

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def names(self) -> list[str]:
        return list(self._items)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.values for k, t in self._items.items()}

    def size(self) -> int:
        return sum(t.values.size for t in self._items.values())

    def compatible(self, other: "ParameterSet") -> bool:
        if self.names() != other.names():
            return False
        return all(self[k].shape == other[k].shape for k in self.names())

    def equals(self, other: "ParameterSet") -> bool:
        """Bitwise equality of values."""
        return self.compatible(other) and all(
            np.array_equal(self[k].values, other[k].values) for k in self.names())

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet([(k, Tensor(np.zeros_like(t.values))) for k, t in self])

    def zero_grad(self) -> None:
        for _, t in self:
            t.grad[...] = 0.0

    def flat(self) -> np.ndarray:
        return np.concatenate([t.values.ravel() for _, t in self]) if len(self) else np.zeros(0)

    def __repr__(self):
        inner = ", ".join(f"{k}{t.shape}" for k, t in self)
        return f"ParameterSet({inner})"


def snapshot(params: ParameterSet) -> ParameterSet:
    return ParameterSet([(k, t.copy()) for k, t in params])


def restore(params: ParameterSet, saved: ParameterSet) -> None:
    """Overwrite ``params`` in place with the values held by ``saved``."""
    if not params.compatible(saved):
        raise ShapeError("cannot restore from an incompatible parameter set")
    for name, tensor in params:
        tensor.values[...] = saved[name].values


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_network(spec: NetworkSpec, seed: int) -> ParameterSet:
    """Glorot-uniform weights and zero biases, drawn in layer order from ``seed``."""
    spec.shapes()
    rng = np.random.default_rng(seed)
    items = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            w = _glorot(rng, (layer.in_dim, layer.out_dim), layer.in_dim, layer.out_dim)
            items += [(f"{i}.weight", Tensor(w)), (f"{i}.bias", Tensor(np.zeros(layer.out_dim)))]
        elif isinstance(layer, Conv2d):
            shape = (KERNEL, KERNEL, layer.in_channels, layer.out_channels)
            fan_in = KERNEL * KERNEL * layer.in_channels
            fan_out = KERNEL * KERNEL * layer.out_channels
            items += [(f"{i}.weight", Tensor(_glorot(rng, shape, fan_in, fan_out))),
                      (f"{i}.bias", Tensor(np.zeros(layer.out_channels)))]
    return ParameterSet(items)


def is_bias(name: str) -> bool:
    return name.endswith(".bias")


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardTrace:
    spec: NetworkSpec
    mode: str
    inputs: list[np.ndarray]  # inputs[i] feeds layer i; inputs[-1] is the network output
    masks: dict[int, np.ndarray] = field(default_factory=dict)
    argmax: dict[int, np.ndarray] = field(default_factory=dict)
    batched: bool = True

    @property
    def output(self) -> np.ndarray:
        return self.inputs[-1]

    @property
    def logits(self) -> np.ndarray:
        return self.inputs[-2]

    @property
    def features(self) -> np.ndarray:
        x = self.inputs[self.spec.feature_index()]
        return x.reshape(x.shape[0], -1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _conv_windows(x: np.ndarray) -> np.ndarray:
    # (N, H, W, C) -> (N, Ho, Wo, C, 3, 3)
    return np.lib.stride_tricks.sliding_window_view(x, (KERNEL, KERNEL), axis=(1, 2))


def _pool_forward(x: np.ndarray):
    n, h, w, c = x.shape
    ho, wo = h // POOL, w // POOL
    blocks = x[:, :ho * POOL, :wo * POOL, :].reshape(n, ho, POOL, wo, POOL, c)
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, POOL * POOL)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def _pool_backward(g: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    n, ho, wo, c = g.shape
    blocks = np.zeros((n, ho, wo, c, POOL * POOL))
    np.put_along_axis(blocks, idx[..., None], g[..., None], axis=-1)
    blocks = blocks.reshape(n, ho, wo, c, POOL, POOL).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(in_shape)
    dx[:, :ho * POOL, :wo * POOL, :] = blocks.reshape(n, ho * POOL, wo * POOL, c)
    return dx


def _batch(spec: NetworkSpec, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == spec.input_shape:
        return x[None], False
    if x.shape[1:] != spec.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match network input {spec.input_shape}")
    return x, True


def forward(params: ParameterSet, spec: NetworkSpec, x, mode: str = "eval",
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network. Returns the output (class distribution for headed
    networks) and a trace holding everything :func:`backward` needs.

    ``mode="train"`` samples inverted-dropout masks from ``rng``; in eval
    mode dropout is the identity.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")
    x, batched = _batch(spec, x)
    trace = ForwardTrace(spec, mode, [x], batched=batched)
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            x = x @ params[f"{i}.weight"].values + params[f"{i}.bias"].values
        elif isinstance(layer, Conv2d):
            w = params[f"{i}.weight"].values
            x = np.einsum("nhwcij,ijco->nhwo", _conv_windows(x), w, optimize=True)
            x = x + params[f"{i}.bias"].values
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool2d):
            x, trace.argmax[i] = _pool_forward(x)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dropout):
            if mode == "train" and layer.keep_prob < 1.0:
                if rng is None:
                    raise ValueError("train-mode dropout needs an rng")
                mask = (rng.random(x.shape) < layer.keep_prob) / layer.keep_prob
                trace.masks[i] = mask
                x = x * mask
        elif isinstance(layer, SoftmaxHead):
            x = softmax(x)
        trace.inputs.append(x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite activation in forward pass")
    out = x if batched else x[0]
    return out, trace


def backward(params: ParameterSet, trace: ForwardTrace, grad_out: np.ndarray,
             through_head: bool = False) -> ParameterSet:
    """Backpropagate ``grad_out`` and return parameter gradients.

    For headed networks ``grad_out`` is taken with respect to the logits
    (the softmax is skipped) unless ``through_head`` is set, in which case it
    is a gradient with respect to the probabilities.
    """
    spec = trace.spec
    g = np.asarray(grad_out, dtype=np.float64)
    if not trace.batched:
        g = g[None]
    grads = params.zeros_like()
    layers = list(enumerate(spec.layers))
    if spec.head:
        p = trace.output
        if through_head:
            g = p * (g - (g * p).sum(axis=-1, keepdims=True))
        layers = layers[:-1]
    for i, layer in reversed(layers):
        x = trace.inputs[i]
        if isinstance(layer, Dense):
            grads[f"{i}.weight"].values[...] = x.T @ g
            grads[f"{i}.bias"].values[...] = g.sum(axis=0)
            g = g @ params[f"{i}.weight"].values.T
        elif isinstance(layer, Conv2d):
            w = params[f"{i}.weight"].values
            grads[f"{i}.weight"].values[...] = np.einsum(
                "nhwcij,nhwo->ijco", _conv_windows(x), g, optimize=True)
            grads[f"{i}.bias"].values[...] = g.sum(axis=(0, 1, 2))
            dx = np.zeros_like(x)
            ho, wo = g.shape[1], g.shape[2]
            for a in range(KERNEL):
                for b in range(KERNEL):
                    dx[:, a:a + ho, b:b + wo, :] += g @ w[a, b].T
            g = dx
        elif isinstance(layer, ReLU):
            g = g * (x > 0)
        elif isinstance(layer, MaxPool2d):
            g = _pool_backward(g, trace.argmax[i], x.shape)
        elif isinstance(layer, Flatten):
            g = g.reshape(x.shape)
        elif isinstance(layer, Dropout):
            if i in trace.masks:
                g = g * trace.masks[i]
    for name, t in grads:
        if not np.all(np.isfinite(t.values)):
            raise NumericalError(f"non-finite gradient for {name}")
    return grads


def cross_entropy(distribution, label: int) -> float:
    p = np.asarray(distribution, dtype=np.float64)
    if not 0 <= label < p.shape[-1]:
        raise IndexError(f"label {label} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(p[label], PROB_FLOOR)))


def log_prob(params: ParameterSet, spec: NetworkSpec, x, classes) -> np.ndarray:
    """Floored eval-mode log pi(x, class), batched."""
    probs, _ = forward(params, spec, x, "eval")
    probs = np.atleast_2d(probs)
    classes = np.atleast_1d(classes)
    return np.log(np.maximum(probs[np.arange(len(classes)), classes], PROB_FLOOR))


def weighted_log_prob_backward(params: ParameterSet, trace: ForwardTrace,
                               classes, weights) -> ParameterSet:
    """Gradient of mean_b weights[b] * log p_b[classes[b]] for a recorded trace.

    ``classes`` and ``weights`` may be 2-D (one column per term) to fold
    several log-prob objectives over the same inputs into one backward pass.
    """
    p = trace.output
    n, k = p.shape
    classes = np.asarray(classes).reshape(n, -1)
    weights = np.asarray(weights, dtype=np.float64).reshape(n, -1)
    if classes.min() < 0 or classes.max() >= k:
        raise IndexError("class index out of range")
    dlogits = np.zeros_like(p)
    rows = np.arange(n)
    for col in range(classes.shape[1]):
        w = weights[:, col:col + 1]
        onehot = np.zeros_like(p)
        onehot[rows, classes[:, col]] = 1.0
        dlogits += w * (onehot - p)
    dlogits /= n
    if not trace.batched:
        dlogits = dlogits[0]
    return backward(params, trace, dlogits)


def grad_weighted_log_prob(params: ParameterSet, spec: NetworkSpec, inputs, classes, weights,
                           mode: str = "eval",
                           rng: np.random.Generator | None = None) -> ParameterSet:
    """Gradient of the batch mean of ``weight * log pi(input, class)``.

    Uses the analytic softmax derivative ``onehot - p`` with respect to the
    logits; the probability floor only matters for the loss value.
    """
    inputs, _ = _batch(spec, inputs)
    classes = np.atleast_1d(np.asarray(classes, dtype=int))
    weights = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if len(inputs) == 0:
        raise ValueError("empty batch")
    if not (len(inputs) == len(classes) == len(weights)):
        raise ShapeError("inputs, classes and weights must have equal length")
    _, trace = forward(params, spec, inputs, mode, rng)
    return weighted_log_prob_backward(params, trace, classes, weights)


def _check_compatible(params: ParameterSet, grads: ParameterSet) -> None:
    if not params.compatible(grads):
        raise ShapeError("gradient set does not match parameter set")


def sgd_step(params: ParameterSet, grads: ParameterSet, rate: float,
             direction: str = "descent") -> None:
    if direction not in ("ascent", "descent"):
        raise ValueError(f"direction must be 'ascent' or 'descent', not {direction!r}")
    _check_compatible(params, grads)
    sign = 1.0 if direction == "ascent" else -1.0
    for name, t in params:
        t.values += sign * rate * grads[name].values


def add_grads(a: ParameterSet, b: ParameterSet, scale: float = 1.0) -> ParameterSet:
    """``a + scale * b`` as a new gradient set."""
    _check_compatible(a, b)
    return ParameterSet([(k, Tensor(t.values + scale * b[k].values)) for k, t in a])


def l2_penalty_grads(params: ParameterSet, lam: float) -> ParameterSet:
    """Gradient of ``lam/2 * sum ||W||^2`` over weight tensors; biases get zero."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return ParameterSet([
        (k, Tensor(np.zeros_like(t.values) if is_bias(k) else lam * t.values))
        for k, t in params])
