"""
Building blocks shared by the CTR architectures
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.autodiff import ops
from app.autodiff.tensor import Tensor
from app.core.errors import ContractViolation
from app.schemas.config import Activation

ACTIVATIONS: Dict[Activation, Callable[[Tensor], Tensor]] = {
    Activation.RELU: ops.relu,
    Activation.TANH: ops.tanh,
}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Dense:
    """Affine map x @ kernel + bias"""

    def __init__(
        self,
        params: Dict[str, Tensor],
        name: str,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        dtype=np.float32,
        use_bias: bool = True,
    ):
        self.kernel = Tensor(glorot_uniform(rng, in_dim, out_dim, dtype), name=f"{name}/kernel")
        params[self.kernel.name] = self.kernel
        self.bias: Optional[Tensor] = None
        if use_bias:
            self.bias = Tensor(np.zeros(out_dim, dtype=dtype), name=f"{name}/bias")
            params[self.bias.name] = self.bias

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.kernel)
        return y if self.bias is None else ops.add(y, self.bias)


class MLP:
    """Stack of Dense layers, each followed by the activation and dropout"""

    def __init__(
        self,
        params: Dict[str, Tensor],
        name: str,
        in_dim: int,
        units: Sequence[int],
        activation: Activation,
        dropout: float,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.layers: List[Dense] = []
        width = in_dim
        for i, out in enumerate(units):
            self.layers.append(Dense(params, f"{name}/dense_{i}", width, out, rng, dtype))
            width = out
        self.out_dim = width
        self.activation = ACTIVATIONS[Activation(activation)]
        self.dropout = float(dropout)

    def __call__(self, x: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        for layer in self.layers:
            x = self.activation(layer(x))
            if training and self.dropout > 0.0:
                if rng is None:
                    raise ContractViolation("Training with dropout needs a random generator")
                x = ops.dropout(x, self.dropout, rng, training=True)
        return x


def fm_second_order(embeddings: Tensor) -> Tensor:
    """
    Sum of pairwise inner products between field embeddings.

    ``embeddings`` is (batch, fields, dim); returns (batch, 1) computed as
    0.5 * sum_d[(sum_f E_fd)^2 - sum_f E_fd^2].
    """
    if embeddings.ndim != 3:
        raise ContractViolation(f"Expected (batch, fields, dim), got {embeddings.shape}")
    if embeddings.shape[1] < 2:
        raise ContractViolation("Pairwise interactions need at least two fields")
    square_of_sum = ops.square(ops.reduce_sum(embeddings, axis=1))
    sum_of_square = ops.reduce_sum(ops.square(embeddings), axis=1)
    return ops.mul(ops.reduce_sum(ops.sub(square_of_sum, sum_of_square), axis=1, keepdims=True), 0.5)


def pair_positions(num_fields: int) -> np.ndarray:
    """Flat positions of the (i, j), i < j entries of a fields x fields matrix, row-major"""
    rows, cols = np.triu_indices(num_fields, k=1)
    return rows * num_fields + cols


def inner_products(embeddings: Tensor) -> Tensor:
    """(batch, fields, dim) -> (batch, C(fields, 2)) of <E_i, E_j> for i < j"""
    b, m, _ = embeddings.shape
    gram = ops.matmul(embeddings, ops.transpose(embeddings, (0, 2, 1)))
    return ops.index_select(ops.reshape(gram, (b, m * m)), pair_positions(m), axis=1)


def cin_layer(prev: Tensor, base: Tensor, weight: Tensor) -> Tensor:
    """
    One compressed interaction layer.

    ``prev`` is (batch, H, dim), ``base`` is (batch, m, dim) and ``weight`` is
    (H_out, H * m) with entry [h, i * m + j] weighting prev row i times base
    row j. Output is (batch, H_out, dim).
    """
    if prev.ndim != 3 or base.ndim != 3:
        raise ContractViolation(f"CIN inputs must be 3-d, got {prev.shape} and {base.shape}")
    b, h, k = prev.shape
    _, m, k0 = base.shape
    if k != k0:
        raise ContractViolation(f"CIN embedding dims differ: {k} vs {k0}")
    if weight.shape[1] != h * m:
        raise ContractViolation(f"CIN weight needs {h * m} columns, got {weight.shape}")

    outer = ops.mul(ops.reshape(prev, (b, h, 1, k)), ops.reshape(base, (b, 1, m, k)))
    return ops.matmul(weight, ops.reshape(outer, (b, h * m, k)))


class SelfAttention:
    """Scaled dot-product multi-head self-attention across fields"""

    def __init__(
        self,
        params: Dict[str, Tensor],
        name: str,
        dim: int,
        head_size: int,
        num_heads: int,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        width = head_size * num_heads
        self.query = Dense(params, f"{name}/query", dim, width, rng, dtype, use_bias=False)
        self.key = Dense(params, f"{name}/key", dim, width, rng, dtype, use_bias=False)
        self.value = Dense(params, f"{name}/value", dim, width, rng, dtype, use_bias=False)
        self.head_size = head_size
        self.num_heads = num_heads
        self.out_dim = width

    def _split(self, x: Tensor) -> Tensor:
        b, m, _ = x.shape
        return ops.transpose(ops.reshape(x, (b, m, self.num_heads, self.head_size)), (0, 2, 1, 3))

    def __call__(self, embeddings: Tensor, return_weights: bool = False):
        b, m, _ = embeddings.shape
        q = self._split(self.query(embeddings))
        k = self._split(self.key(embeddings))
        v = self._split(self.value(embeddings))

        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.head_size))
        weights = ops.softmax(scores, axis=-1)
        heads = ops.matmul(weights, v)
        out = ops.reshape(ops.transpose(heads, (0, 2, 1, 3)), (b, m, self.out_dim))
        if return_weights:
            return out, weights
        return out


def flatten_fields(embeddings: Tensor) -> Tensor:
    b, m, k = embeddings.shape
    return ops.reshape(embeddings, (b, m * k))


def join(parts: Sequence[Optional[Tensor]]) -> Tensor:
    """Concatenate the non-empty parts along the last axis"""
    kept: Tuple[Tensor, ...] = tuple(p for p in parts if p is not None and p.shape[-1] > 0)
    if len(kept) == 1:
        return kept[0]
    return ops.concat(kept, axis=-1)
