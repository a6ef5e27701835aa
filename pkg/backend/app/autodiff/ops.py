"""
Primitive operations with their reverse-mode rules.

Every primitive computes its output eagerly and, when a tape is active and an
input requires a gradient, appends an OpRecord carrying a replayable forward
function and the vector-Jacobian product.
"""

from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from app.autodiff.tensor import OpRecord, Tensor, active_tape
from app.core.errors import ContractViolation

Scalar = Union[int, float]
Axis = Optional[Union[int, Sequence[int]]]


def _emit(
    op: str,
    inputs: Tuple[Tensor, ...],
    value: np.ndarray,
    forward: Callable[..., np.ndarray],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(OpRecord(op, inputs, out, forward, backward))
    return out


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _pair(a, b) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    if isinstance(b, Tensor):
        return _lift(a, b), b
    raise ContractViolation("At least one operand must be a Tensor")


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape"""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    kept = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if kept:
        g = g.sum(axis=kept, keepdims=True)
    return g.reshape(shape)


def _norm_axes(axis: Axis, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), np.add(a.data, b.data), np.add, backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", (a, b), np.subtract(a.data, b.data), np.subtract, backward)


def neg(x: Tensor) -> Tensor:
    return _emit("neg", (x,), np.negative(x.data), np.negative, lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("multiply", (a, b), np.multiply(a.data, b.data), np.multiply, backward)


def square(x: Tensor) -> Tensor:
    return _emit("square", (x,), np.square(x.data), np.square, lambda g: (2.0 * x.data * g,))


# Linear algebra

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolation(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", (a, b), np.matmul(a.data, b.data), np.matmul, backward)


# Activations

def relu(x: Tensor) -> Tensor:
    def forward(v):
        return np.maximum(v, 0).astype(v.dtype)

    # subgradient at exactly 0 is 0
    return _emit("relu", (x,), forward(x.data), forward, lambda g: (g * (x.data > 0),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit("tanh", (x,), y, np.tanh, lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    return _emit("sigmoid", (x,), y, expit, lambda g: (g * y * (1.0 - y),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    def forward(v):
        shifted = v - v.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=axis, keepdims=True)

    y = forward(x.data)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", (x,), y, forward, backward)


# Reductions accumulate in float64 and cast back

def reduce_sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)

    def forward(v):
        return np.asarray(np.sum(v, axis=axes, dtype=np.float64, keepdims=keepdims), dtype=v.dtype)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _emit("sum", (x,), forward(x.data), forward, backward)


def reduce_mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))

    def forward(v):
        return np.asarray(np.mean(v, axis=axes, dtype=np.float64, keepdims=keepdims), dtype=v.dtype)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return _emit("mean", (x,), forward(x.data), forward, backward)


# Shape manipulation

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)

    def forward(v):
        return v.reshape(shape)

    return _emit("reshape", (x,), forward(x.data), forward, lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def forward(v):
        return np.transpose(v, axes)

    return _emit("transpose", (x,), forward(x.data), forward, lambda g: (np.transpose(g, inverse),))


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ContractViolation("concat needs at least one tensor")
    ax = axis % tensors[0].ndim
    offsets = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def forward(*arrays):
        return np.concatenate(arrays, axis=ax)

    def backward(g):
        return tuple(np.split(g, offsets, axis=ax))

    return _emit("concat", tensors, forward(*[t.data for t in tensors]), forward, backward)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    ax = axis % (tensors[0].ndim + 1)

    def forward(*arrays):
        return np.stack(arrays, axis=ax)

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _emit("stack", tensors, forward(*[t.data for t in tensors]), forward, backward)


def slice_(x: Tensor, index) -> Tensor:
    def forward(v):
        return v[index]

    def backward(g):
        z = np.zeros_like(x.data)
        np.add.at(z, index, g)
        return (z,)

    return _emit("slice", (x,), forward(x.data), forward, backward)


def index_select(x: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    """Pick positions along one axis; repeated positions accumulate gradient"""
    indices = np.asarray(indices, dtype=np.int64)
    ax = axis % x.ndim
    where = (slice(None),) * ax + (indices,)

    def forward(v):
        return np.take(v, indices, axis=ax)

    def backward(g):
        z = np.zeros_like(x.data)
        np.add.at(z, where, g)
        return (z,)

    return _emit("slice", (x,), forward(x.data), forward, backward)


def gather(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup; gradient lands only on the rows that were read"""
    indices = np.asarray(indices, dtype=np.int64)
    rows = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= rows):
        raise ContractViolation(
            f"Lookup index out of bounds for table with {rows} rows "
            f"(min={indices.min()}, max={indices.max()})"
        )

    def forward(v):
        return v[indices]

    def backward(g):
        z = np.zeros_like(table.data)
        np.add.at(z, indices, g)
        return (z,)

    return _emit("gather", (table,), forward(table.data), forward, backward)


# Training-time helpers

def apply_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    mask = np.asarray(mask, dtype=x.dtype)

    def forward(v):
        return v * mask

    return _emit("dropout", (x,), forward(x.data), forward, lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate) so inference is a no-op"""
    if not training or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ContractViolation(f"Dropout rate must be < 1, got {rate}")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return apply_mask(x, mask)


def binary_cross_entropy_with_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy computed from logits in float64"""
    y = np.asarray(labels, dtype=np.float64).reshape(logits.shape)
    n = logits.size
    if n == 0:
        raise ContractViolation("Cross-entropy over an empty batch")

    def forward(z):
        z64 = z.astype(np.float64)
        loss = np.maximum(z64, 0.0) - z64 * y + np.log1p(np.exp(-np.abs(z64)))
        return np.asarray(loss.mean(), dtype=z.dtype)

    def backward(g):
        p = expit(logits.data.astype(np.float64))
        return (((p - y) * (np.float64(g) / n)).astype(logits.dtype),)

    return _emit("bce", (logits,), forward(logits.data), forward, backward)
