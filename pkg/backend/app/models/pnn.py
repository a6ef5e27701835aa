"""
Inner-product PNN: embeddings and their pairwise inner products feed an MLP
"""

from typing import List, Optional

import numpy as np

from app.autodiff.tensor import Tensor
from app.models.base import CTRModel
from app.models.layers import MLP, flatten_fields, inner_products, join
from app.schemas.config import Architecture


class PNN(CTRModel):
    architecture = Architecture.PNN

    def build(self, rng: np.random.Generator) -> List[int]:
        m, k = self.num_fields, self.config.embedding_dim
        self.num_pairs = m * (m - 1) // 2
        self.mlp = MLP(
            self.params,
            "mlp",
            m * k + self.num_pairs + self.num_numeric,
            self.config.hidden_units,
            self.config.activation,
            self.config.dropout,
            rng,
            self.dtype,
        )
        return [self.mlp.out_dim]

    def product_layer(self, embeddings: Tensor, numeric: Optional[Tensor]) -> Tensor:
        """Flattened embeddings, inner products and numerics side by side"""
        products = inner_products(embeddings) if self.num_pairs else None
        return join([flatten_fields(embeddings), products, numeric])

    def components(self, embeddings, field_weights, numeric, training, rng) -> List[Tensor]:
        return [self.mlp(self.product_layer(embeddings, numeric), training, rng)]
