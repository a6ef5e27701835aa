"""
Shared model plumbing: embeddings, first-order weights, output head and state
"""

import logging
from typing import ClassVar, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from app.autodiff import ops
from app.autodiff.tensor import Tensor
from app.core.errors import ContractViolation
from app.models.embedding import EmbeddingTable, embed_batch
from app.models.layers import glorot_uniform
from app.schemas.config import Architecture, ModelConfig

logger = logging.getLogger(__name__)

# keeps probabilities strictly inside (0, 1) once rounded to float32
PROBABILITY_EPS = float(np.finfo(np.float32).eps)


class CTRModel:
    """
    Base class for the click models.

    Subclasses add their own parameters in ``build`` and return the list of
    component outputs (each (batch, width)) from ``components``; the base
    class concatenates them and applies one linear head with a bias. Slots
    named in ``unit_slots`` start with head weight 1 so additive terms enter
    the logit unscaled.
    """

    architecture: ClassVar[Architecture]

    def __init__(
        self,
        config: ModelConfig,
        vocab_sizes: Sequence[int],
        num_numeric: int = 0,
        seed: int = 0,
        dtype=np.float32,
    ):
        if config.architecture != self.architecture:
            raise ContractViolation(
                f"{type(self).__name__} cannot be built from a {config.architecture.value} config"
            )
        if not vocab_sizes:
            raise ContractViolation("A model needs at least one categorical field")
        self.config = config
        self.vocab_sizes = [int(v) for v in vocab_sizes]
        self.num_fields = len(self.vocab_sizes)
        self.num_numeric = int(num_numeric)
        self.dtype = np.dtype(dtype)
        self.params: Dict[str, Tensor] = {}

        rng = np.random.default_rng(seed)
        k = config.embedding_dim
        self.embeddings: List[EmbeddingTable] = []
        self.weights: List[EmbeddingTable] = []
        for f, size in enumerate(self.vocab_sizes):
            table = EmbeddingTable(f"embedding/field_{f}", size, k, rng, self.dtype)
            table.register(self.params)
            self.embeddings.append(table)
        for f, size in enumerate(self.vocab_sizes):
            table = EmbeddingTable(f"linear/field_{f}", size, 1, rng, self.dtype, init="zeros")
            table.register(self.params)
            self.weights.append(table)
        self.numeric_weight: Optional[Tensor] = None
        if self.num_numeric:
            self.numeric_weight = self._add("linear/numeric", np.zeros((self.num_numeric, 1)))

        widths = self.build(rng)
        kernel = glorot_uniform(rng, sum(widths), 1, self.dtype)
        offset = 0
        for slot, width in enumerate(widths):
            if slot in self.unit_slots():
                kernel[offset:offset + width] = 1.0
            offset += width
        self.head_kernel = self._add("head/kernel", kernel)
        self.head_bias = self._add("head/bias", np.zeros(1))

    # Subclass hooks

    def build(self, rng: np.random.Generator) -> List[int]:
        """Create architecture parameters; return the width of each component"""
        raise NotImplementedError

    def unit_slots(self) -> Sequence[int]:
        return ()

    def components(
        self,
        embeddings: Tensor,
        field_weights: Tensor,
        numeric: Optional[Tensor],
        training: bool,
        rng: Optional[np.random.Generator],
    ) -> List[Tensor]:
        raise NotImplementedError

    # Shared pieces

    def _add(self, name: str, values: np.ndarray) -> Tensor:
        tensor = Tensor(np.asarray(values).astype(self.dtype), name=name)
        self.params[name] = tensor
        return tensor

    @property
    def name(self) -> str:
        return self.config.display_name

    def embed(self, categorical: np.ndarray) -> Tensor:
        return embed_batch(categorical, self.embeddings)

    def field_weights(self, categorical: np.ndarray) -> Tensor:
        """Per-field first-order weight of each example's value, (batch, fields)"""
        b = categorical.shape[0]
        return ops.reshape(embed_batch(categorical, self.weights), (b, self.num_fields))

    def numeric_linear(self, numeric: Optional[Tensor]) -> Optional[Tensor]:
        if numeric is None or self.numeric_weight is None:
            return None
        return ops.matmul(numeric, self.numeric_weight)

    def linear_term(self, field_weights: Tensor, numeric: Optional[Tensor]) -> Tensor:
        total = ops.reduce_sum(field_weights, axis=1, keepdims=True)
        extra = self.numeric_linear(numeric)
        return total if extra is None else ops.add(total, extra)

    def _inputs(self, categorical: np.ndarray, numeric: Optional[np.ndarray]):
        categorical = np.asarray(categorical, dtype=np.int64)
        if categorical.ndim != 2 or categorical.shape[1] != self.num_fields:
            raise ContractViolation(
                f"Expected categorical indices of shape (batch, {self.num_fields}), got {categorical.shape}"
            )
        numeric_t = None
        if self.num_numeric:
            if numeric is None:
                raise ContractViolation(f"Model expects {self.num_numeric} numeric features")
            arr = np.asarray(numeric, dtype=self.dtype).reshape(categorical.shape[0], self.num_numeric)
            numeric_t = Tensor(arr)
        return categorical, numeric_t

    def forward(
        self,
        categorical: np.ndarray,
        numeric: Optional[np.ndarray] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """Logits of shape (batch, 1)"""
        categorical, numeric_t = self._inputs(categorical, numeric)
        embeddings = self.embed(categorical)
        weights = self.field_weights(categorical)
        parts = self.components(embeddings, weights, numeric_t, training, rng)
        joined = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1)
        return ops.add(ops.matmul(joined, self.head_kernel), self.head_bias)

    def predict_proba(self, categorical: np.ndarray, numeric: Optional[np.ndarray] = None) -> np.ndarray:
        """Click probabilities with dropout disabled"""
        logits = self.forward(categorical, numeric, training=False).data.reshape(-1)
        probs = expit(logits.astype(np.float64))
        return np.clip(probs, PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)

    # State

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        unexpected = set(state) - set(self.params)
        if missing or unexpected:
            raise ContractViolation(
                f"State does not match model: missing={sorted(missing)} unexpected={sorted(unexpected)}"
            )
        for name, tensor in self.params.items():
            values = np.asarray(state[name])
            if values.shape != tensor.shape:
                raise ContractViolation(f"Shape mismatch for {name}: {values.shape} vs {tensor.shape}")
            tensor.data = values.astype(self.dtype, copy=True)

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} fields={self.num_fields} params={self.num_parameters()}>"
