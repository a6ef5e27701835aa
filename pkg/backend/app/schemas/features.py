"""
Feature schema declarations
"""

import hashlib
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class FieldKind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


class FieldSpec(BaseModel):
    name: str = Field(..., min_length=1)
    kind: FieldKind
    vocab_size: Optional[int] = Field(None, ge=1)

    @property
    def is_categorical(self) -> bool:
        return self.kind == FieldKind.CATEGORICAL


class FeatureSchema(BaseModel):
    """Ordered field declarations; the order is part of the checkpoint"""
    fields: List[FieldSpec]

    @model_validator(mode="after")
    def _unique_names(self) -> "FeatureSchema":
        names = [f.name for f in self.fields]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"Duplicate field names: {duplicates}")
        return self

    @property
    def categorical(self) -> List[FieldSpec]:
        return [f for f in self.fields if f.is_categorical]

    @property
    def numeric(self) -> List[FieldSpec]:
        return [f for f in self.fields if not f.is_categorical]

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.fields]

    def with_vocab_sizes(self, sizes: Dict[str, int]) -> "FeatureSchema":
        """Copy with vocabulary sizes filled in for categorical fields"""
        return FeatureSchema(
            fields=[
                f.model_copy(update={"vocab_size": sizes[f.name]}) if f.is_categorical else f
                for f in self.fields
            ]
        )

    def fingerprint(self) -> str:
        payload = self.model_dump_json().encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def default_schema() -> FeatureSchema:
    """User, content and calendar fields plus three behavioral counters"""
    return FeatureSchema(
        fields=[
            FieldSpec(name="user_id", kind=FieldKind.CATEGORICAL),
            FieldSpec(name="content_id", kind=FieldKind.CATEGORICAL),
            FieldSpec(name="content_type", kind=FieldKind.CATEGORICAL),
            FieldSpec(name="connection_frequency", kind=FieldKind.NUMERIC),
            FieldSpec(name="content_total_clicks", kind=FieldKind.NUMERIC),
            FieldSpec(name="user_content_clicks", kind=FieldKind.NUMERIC),
            FieldSpec(name="day", kind=FieldKind.CATEGORICAL),
            FieldSpec(name="month", kind=FieldKind.CATEGORICAL),
        ]
    )
