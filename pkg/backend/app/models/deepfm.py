"""
DeepFM: linear term, FM interactions and an MLP over the same embeddings
"""

from typing import List

import numpy as np

from app.autodiff.tensor import Tensor
from app.models.base import CTRModel
from app.models.layers import MLP, flatten_fields, fm_second_order, join
from app.schemas.config import Architecture

LINEAR, FM, DEEP = 0, 1, 2


class DeepFM(CTRModel):
    architecture = Architecture.DEEPFM

    def build(self, rng: np.random.Generator) -> List[int]:
        m, k = self.num_fields, self.config.embedding_dim
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
        return [1, 1, self.mlp.out_dim]

    def unit_slots(self):
        return (LINEAR, FM)

    def components(self, embeddings, field_weights, numeric, training, rng) -> List[Tensor]:
        linear = self.linear_term(field_weights, numeric)
        fm = fm_second_order(embeddings)
        deep = self.mlp(join([flatten_fields(embeddings), numeric]), training, rng)
        return [linear, fm, deep]
