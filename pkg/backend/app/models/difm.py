"""
DIFM: a dual bit-wise / vector-wise network learns per-field factors that
reweigh embeddings and first-order weights before an FM prediction
"""

from typing import List, Optional

import numpy as np

from app.autodiff import ops
from app.autodiff.tensor import Tensor
from app.models.base import CTRModel
from app.models.layers import MLP, Dense, SelfAttention, flatten_fields, fm_second_order, join
from app.schemas.config import Architecture

LINEAR, FM = 0, 1


class DIFM(CTRModel):
    architecture = Architecture.DIFM

    def build(self, rng: np.random.Generator) -> List[int]:
        cfg = self.config
        m, k = self.num_fields, cfg.embedding_dim
        # vector-wise branch
        self.attention = SelfAttention(
            self.params, "attention", k, cfg.attention_head_size, cfg.num_attention_heads, rng, self.dtype
        )
        self.residual = Dense(self.params, "attention/residual", k, self.attention.out_dim, rng, self.dtype, use_bias=False)
        self.vector_factors = Dense(self.params, "factors/vector", m * self.attention.out_dim, m, rng, self.dtype)
        # bit-wise branch
        self.mlp = MLP(self.params, "mlp", m * k + self.num_numeric, cfg.hidden_units, cfg.activation, cfg.dropout, rng, self.dtype)
        self.bit_factors = Dense(self.params, "factors/bit", self.mlp.out_dim, m, rng, self.dtype)
        return [1, 1]

    def unit_slots(self):
        return (LINEAR, FM)

    def input_aware_factors(
        self,
        embeddings: Tensor,
        numeric: Optional[Tensor],
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """(batch, fields) sum of vector-wise and bit-wise factors"""
        b = embeddings.shape[0]
        attended = ops.add(self.attention(embeddings), self.residual(embeddings))
        vector = self.vector_factors(ops.reshape(attended, (b, attended.shape[1] * attended.shape[2])))
        bit = self.bit_factors(self.mlp(join([flatten_fields(embeddings), numeric]), training, rng))
        return ops.add(vector, bit)

    def reweigh(self, embeddings: Tensor, field_weights: Tensor, numeric: Optional[Tensor], factors: Tensor) -> List[Tensor]:
        """Linear and FM components after scaling every field by its factor"""
        b, m, _ = embeddings.shape
        scaled = ops.mul(embeddings, ops.reshape(factors, (b, m, 1)))
        linear = self.linear_term(ops.mul(field_weights, factors), numeric)
        return [linear, fm_second_order(scaled)]

    def components(self, embeddings, field_weights, numeric, training, rng) -> List[Tensor]:
        factors = self.input_aware_factors(embeddings, numeric, training, rng)
        return self.reweigh(embeddings, field_weights, numeric, factors)
