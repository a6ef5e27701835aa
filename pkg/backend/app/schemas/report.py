"""
Evaluation, training-log and recommendation schemas
"""

from datetime import date
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from app.schemas.events import ContentType


class ContentRMSE(BaseModel):
    rmse: float = Field(..., ge=0.0)
    count: int = Field(..., ge=1)


class EvalReport(BaseModel):
    model_name: str
    country: str
    content_type: ContentType
    # None when the test labels hold a single class
    auc: Optional[float] = Field(None, ge=0.0, le=1.0)
    rmse: float = Field(..., ge=0.0, le=1.0)
    per_content: Dict[str, ContentRMSE] = Field(default_factory=dict)
    num_examples: int = 0
    positive_rate: float = 0.0
    oracle_auc: Optional[float] = Field(None, ge=0.0, le=1.0)
    test_date: Optional[date] = None


class EpochMetrics(BaseModel):
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    val_auc: Optional[float] = None


class RecommendationItem(BaseModel):
    content_id: str
    probability: float = Field(..., gt=0.0, lt=1.0)


class RecommendationList(BaseModel):
    user_id: str
    content_type: ContentType
    generated_at: date
    items: List[RecommendationItem] = Field(default_factory=list)


class Manifest(BaseModel):
    """Run-directory index, merged across commands"""
    tool: str = "ctrforge"
    version: str
    config_hash: str
    commands: List[str] = Field(default_factory=list)
    # name -> path of every input read
    inputs: Dict[str, str] = Field(default_factory=dict)
    # paths relative to the run directory
    artifacts: List[str] = Field(default_factory=list)
