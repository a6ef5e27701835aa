"""
Behavioral log events and content types
"""

from datetime import date, datetime, timezone
from enum import Enum

from pydantic import BaseModel, Field, field_validator


class ContentType(str, Enum):
    DRUG = "drug"
    DRUG_FAMILY = "drug_family"
    VIDEO_CHAPTER = "video_chapter"
    VIDEO_MODULE = "video_module"

# Report row order
CONTENT_TYPE_ORDER = [
    ContentType.DRUG,
    ContentType.DRUG_FAMILY,
    ContentType.VIDEO_CHAPTER,
    ContentType.VIDEO_MODULE,
]

CONTENT_TYPE_LABELS = {
    ContentType.DRUG: "Drug",
    ContentType.DRUG_FAMILY: "Drug family",
    ContentType.VIDEO_CHAPTER: "Video chapter",
    ContentType.VIDEO_MODULE: "Video module",
}


class InteractionEvent(BaseModel):
    """One behavioral-log row"""
    user_id: str = Field(..., min_length=1)
    content_id: str = Field(..., min_length=1)
    content_type: ContentType
    timestamp: datetime

    @field_validator("timestamp")
    @classmethod
    def _as_utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)

    @property
    def day(self) -> date:
        return self.timestamp.date()
