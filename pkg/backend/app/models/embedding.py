"""
Per-field embedding tables and batched lookup
"""

from typing import Dict, Sequence

import numpy as np

from app.autodiff import ops
from app.autodiff.tensor import Tensor
from app.core.errors import ContractViolation

EMBEDDING_INIT_SCALE = 0.05


class EmbeddingTable:
    """(vocab_size, dim) matrix for one categorical field; row 0 is the OOV row"""

    def __init__(
        self,
        name: str,
        vocab_size: int,
        dim: int,
        rng: np.random.Generator,
        dtype=np.float32,
        init: str = "uniform",
    ):
        if vocab_size < 1 or dim < 1:
            raise ContractViolation(f"Embedding table {name} needs positive shape, got ({vocab_size}, {dim})")
        if init == "zeros":
            values = np.zeros((vocab_size, dim))
        else:
            values = rng.uniform(-EMBEDDING_INIT_SCALE, EMBEDDING_INIT_SCALE, size=(vocab_size, dim))
        self.name = name
        self.weight = Tensor(values.astype(dtype), name=name)

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def lookup(self, indices: np.ndarray) -> Tensor:
        return ops.gather(self.weight, indices)

    def register(self, params: Dict[str, Tensor]) -> None:
        params[self.name] = self.weight


def embed_batch(indices: np.ndarray, tables: Sequence[EmbeddingTable]) -> Tensor:
    """
    Field-embedding matrices for a batch.

    ``indices`` is (batch, fields); the result is (batch, fields, dim) with
    row f of each example equal to ``tables[f]`` at that example's index.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 2 or indices.shape[1] != len(tables):
        raise ContractViolation(
            f"Expected indices of shape (batch, {len(tables)}), got {indices.shape}"
        )
    columns = [table.lookup(indices[:, f]) for f, table in enumerate(tables)]
    return ops.stack(columns, axis=1)
