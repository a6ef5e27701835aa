"""
Top-K content recommendations for one user
"""

import logging
from datetime import date
from typing import Optional

import numpy as np

from app.core.errors import ConfigError, DataError
from app.schemas.report import RecommendationItem, RecommendationList
from app.services.checkpoint_service import Checkpoint
from app.services.dataset_service import EventLog, build_candidates
from app.services.training_service import predict

logger = logging.getLogger(__name__)


def recommend(
    checkpoint: Checkpoint,
    events: EventLog,
    user_id: str,
    k: int,
    as_of: Optional[date] = None,
) -> RecommendationList:
    """
    Score the whole catalog for a user as of the last logged day (or ``as_of``)
    and keep the K most likely clicks. Equal probabilities rank by content id.
    """
    if k <= 0:
        raise ConfigError(f"K must be positive, got {k}")
    as_of = as_of or events.last_date
    if as_of is None:
        raise DataError("Cannot recommend from an empty log")

    if user_id not in checkpoint.pipeline.vocabs.get("user_id", ()):
        logger.warning("User %s is unknown to the model; scoring with the out-of-vocabulary embedding", user_id)

    candidates = build_candidates(events.frame, checkpoint.content_type, user_id, as_of)
    if candidates.empty:
        return RecommendationList(user_id=user_id, content_type=checkpoint.content_type, generated_at=as_of)

    batch = checkpoint.pipeline.encode_frame(candidates)
    probs = predict(checkpoint, batch)
    content_ids = batch.content_ids.astype(str)
    order = np.lexsort((content_ids, -probs))[:k]
    items = [RecommendationItem(content_id=str(content_ids[i]), probability=float(probs[i])) for i in order]
    return RecommendationList(
        user_id=user_id,
        content_type=checkpoint.content_type,
        generated_at=as_of,
        items=items,
    )
