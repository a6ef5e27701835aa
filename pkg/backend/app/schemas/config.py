"""
Run configuration schemas: synthesis, splitting, model and training
"""

import hashlib
from datetime import date
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.events import ContentType
from app.schemas.features import FeatureSchema, default_schema


class Architecture(str, Enum):
    PNN = "pnn"
    DEEPFM = "deepfm"
    XDEEPFM = "xdeepfm"
    DIFM = "difm"


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


# Report column order and display names
ARCHITECTURE_ORDER = [Architecture.PNN, Architecture.DEEPFM, Architecture.XDEEPFM, Architecture.DIFM]
ARCHITECTURE_LABELS = {
    Architecture.PNN: "PNN",
    Architecture.DEEPFM: "DeepFM",
    Architecture.XDEEPFM: "xDeepFM",
    Architecture.DIFM: "DIFM",
}


class SynthConfig(BaseModel):
    """Synthetic behavioral log generator settings"""
    model_config = ConfigDict(extra="forbid")

    num_users: int = Field(1500, ge=1)
    num_drugs: int = Field(30, ge=1)
    num_drug_families: int = Field(10, ge=1)
    num_video_modules: int = Field(12, ge=1)
    num_video_chapters: int = Field(60, ge=1)
    start_date: date = date(2020, 11, 3)
    num_days: int = Field(120, ge=2)
    num_archetypes: int = Field(10, ge=1)
    base_click_prob: float = Field(0.001, ge=0.0, le=1.0)
    signal_strength: float = Field(0.3, ge=0.0, le=1.0)
    # children share their parent's archetype with this probability
    hierarchy_coherence: float = Field(0.8, ge=0.0, le=1.0)
    # per-user habits: drugs and chapters clicked on almost every online day
    familiar_drugs: int = Field(2, ge=0)
    familiar_chapters: int = Field(2, ge=0)
    familiarity_boost: float = Field(3.0, ge=0.0)
    # daily online probability per user ~ Beta(alpha, beta)
    activity_alpha: float = Field(19.0, gt=0.0)
    activity_beta: float = Field(1.0, gt=0.0)
    seed: int = 7

    @model_validator(mode="after")
    def _check_catalog(self) -> "SynthConfig":
        if self.num_drug_families > self.num_drugs:
            raise ValueError("num_drug_families cannot exceed num_drugs")
        if self.num_video_modules > self.num_video_chapters:
            raise ValueError("num_video_modules cannot exceed num_video_chapters")
        return self


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train_cutoff_date: date = date(2021, 3, 1)
    test_date: date = date(2021, 3, 1)
    validation_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    seed: int = 42

    @model_validator(mode="after")
    def _check_dates(self) -> "SplitSpec":
        if self.test_date < self.train_cutoff_date:
            raise ValueError("test_date must not precede train_cutoff_date")
        return self


class ModelConfig(BaseModel):
    """
    Architecture and hyperparameters.

    Unset activation and dropout resolve per architecture: DIFM uses tanh,
    the others relu; xDeepFM and DIFM drop out at 0.5, the others not at all.
    """
    model_config = ConfigDict(extra="forbid")

    architecture: Architecture = Architecture.DEEPFM
    embedding_dim: int = Field(8, ge=1)
    hidden_units: List[int] = Field(default_factory=lambda: [256, 128, 64])
    activation: Optional[Activation] = None
    dropout: Optional[float] = Field(None, ge=0.0, lt=1.0)
    cin_layer_sizes: List[int] = Field(default_factory=lambda: [16, 16])
    attention_head_size: int = Field(32, ge=1)
    num_attention_heads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _resolve_defaults(self) -> "ModelConfig":
        if self.activation is None:
            self.activation = Activation.TANH if self.architecture == Architecture.DIFM else Activation.RELU
        if self.dropout is None:
            heavy = self.architecture in (Architecture.XDEEPFM, Architecture.DIFM)
            self.dropout = 0.5 if heavy else 0.0
        if any(h < 1 for h in self.hidden_units):
            raise ValueError("hidden_units must be positive")
        if self.architecture == Architecture.XDEEPFM and not self.cin_layer_sizes:
            raise ValueError("xdeepfm needs at least one CIN layer")
        if any(h < 1 for h in self.cin_layer_sizes):
            raise ValueError("cin_layer_sizes must be positive")
        return self

    @property
    def display_name(self) -> str:
        return ARCHITECTURE_LABELS[self.architecture]


def _default_epochs() -> Dict[ContentType, int]:
    return {
        ContentType.DRUG: 10,
        ContentType.DRUG_FAMILY: 10,
        ContentType.VIDEO_CHAPTER: 20,
        ContentType.VIDEO_MODULE: 35,
    }


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # explicit value wins over the per-content-type mapping
    epochs: Optional[int] = Field(None, ge=1)
    epochs_by_content_type: Dict[ContentType, int] = Field(default_factory=_default_epochs)
    batch_size: int = Field(256, ge=1)
    learning_rate: float = Field(0.001, gt=0.0)
    seed: int = 42
    negative_ratio: float = Field(4.0, gt=0.0)
    early_stopping: bool = False
    patience: int = Field(3, ge=1)

    def resolve_epochs(self, content_type: ContentType) -> int:
        if self.epochs is not None:
            return self.epochs
        return self.epochs_by_content_type.get(content_type, 10)


class RunConfig(BaseModel):
    """Everything one reproducible run needs, loaded from a single JSON file"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    logs_path: Optional[str] = None
    workdir: Optional[str] = None
    country: str = Field("synthetic", min_length=1)
    content_type: ContentType = ContentType.DRUG
    schema_: FeatureSchema = Field(default_factory=default_schema, alias="schema")
    split: SplitSpec = Field(default_factory=SplitSpec)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synth: Optional[SynthConfig] = None
    recommend_k: int = Field(10, ge=1)

    @property
    def feature_schema(self) -> FeatureSchema:
        return self.schema_

    def config_hash(self) -> str:
        payload = self.model_dump_json(by_alias=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()
