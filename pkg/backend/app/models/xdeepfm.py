"""
xDeepFM: linear term, a compressed interaction network and an MLP
"""

from typing import List

import numpy as np

from app.autodiff import ops
from app.autodiff.tensor import Tensor
from app.models.base import CTRModel
from app.models.layers import MLP, cin_layer, flatten_fields, glorot_uniform, join
from app.schemas.config import Architecture

LINEAR = 0


class XDeepFM(CTRModel):
    architecture = Architecture.XDEEPFM

    def build(self, rng: np.random.Generator) -> List[int]:
        m, k = self.num_fields, self.config.embedding_dim
        self.cin_weights: List[Tensor] = []
        rows = m
        for i, size in enumerate(self.config.cin_layer_sizes):
            values = glorot_uniform(rng, size, rows * m, self.dtype)
            self.cin_weights.append(self._add(f"cin/layer_{i}", values))
            rows = size
        self.mlp = MLP(
            self.params,
            "mlp",
            m * k + self.num_numeric,
            self.config.hidden_units,
            self.config.activation,
            self.config.dropout,
            rng,
            self.dtype,
        )
        return [1, sum(self.config.cin_layer_sizes), self.mlp.out_dim]

    def unit_slots(self):
        return (LINEAR,)

    def cin(self, embeddings: Tensor) -> Tensor:
        """Sum-pool every CIN layer over the embedding axis and concatenate"""
        pooled = []
        hidden = embeddings
        for weight in self.cin_weights:
            hidden = cin_layer(hidden, embeddings, weight)
            pooled.append(ops.reduce_sum(hidden, axis=2))
        return join(pooled)

    def components(self, embeddings, field_weights, numeric, training, rng) -> List[Tensor]:
        linear = self.linear_term(field_weights, numeric)
        deep = self.mlp(join([flatten_fields(embeddings), numeric]), training, rng)
        return [linear, self.cin(embeddings), deep]
