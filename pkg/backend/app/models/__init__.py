# Click-through-rate architectures
from typing import Dict, Sequence, Type

import numpy as np

from app.models.base import CTRModel
from app.models.deepfm import DeepFM
from app.models.difm import DIFM
from app.models.pnn import PNN
from app.models.xdeepfm import XDeepFM
from app.schemas.config import Architecture, ModelConfig

MODEL_REGISTRY: Dict[Architecture, Type[CTRModel]] = {
    Architecture.PNN: PNN,
    Architecture.DEEPFM: DeepFM,
    Architecture.XDEEPFM: XDeepFM,
    Architecture.DIFM: DIFM,
}


def build_model(
    config: ModelConfig,
    vocab_sizes: Sequence[int],
    num_numeric: int = 0,
    seed: int = 0,
    dtype=np.float32,
) -> CTRModel:
    """Instantiate the architecture named in the config"""
    return MODEL_REGISTRY[config.architecture](config, vocab_sizes, num_numeric, seed=seed, dtype=dtype)


__all__ = ["CTRModel", "DeepFM", "DIFM", "PNN", "XDeepFM", "MODEL_REGISTRY", "build_model"]
