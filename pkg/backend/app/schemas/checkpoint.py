"""
Checkpoint header: the JSON block that describes a checkpoint's tensors
"""

from typing import Dict, List

from pydantic import BaseModel, Field

from app.schemas.config import ModelConfig
from app.schemas.events import ContentType
from app.schemas.features import FeatureSchema


class TensorEntry(BaseModel):
    name: str
    shape: List[int]
    # byte offset into the payload that follows the header
    offset: int = Field(..., ge=0)


class NumericStats(BaseModel):
    mean: Dict[str, float] = Field(default_factory=dict)
    std: Dict[str, float] = Field(default_factory=dict)


class CheckpointHeader(BaseModel):
    format_version: int
    schema_fingerprint: str
    feature_schema: FeatureSchema
    model: ModelConfig
    content_type: ContentType
    # per categorical field, known values in index order starting at 1
    vocabularies: Dict[str, List[str]]
    numeric_stats: NumericStats
    dtype: str = "<f4"
    tensors: List[TensorEntry]
