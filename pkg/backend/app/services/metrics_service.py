"""
Evaluation metrics: rank AUC, RMSE and per-content RMSE
"""

import logging
from datetime import date
from typing import Dict, Optional

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from app.core.errors import ContractViolation, DataError, UndefinedAUCError
from app.schemas.events import ContentType
from app.schemas.report import ContentRMSE, EvalReport

logger = logging.getLogger(__name__)


def auc(scores, labels) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic.

    Ties get midranks, so a tied positive/negative pair counts one half.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ContractViolation(f"scores and labels differ in length: {scores.size} vs {labels.size}")
    if not np.isin(labels, (0, 1)).all():
        raise ContractViolation("labels must be binary")

    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC is undefined when labels hold a single class")

    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rmse(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if predictions.shape != labels.shape:
        raise ContractViolation(
            f"predictions and labels differ in length: {predictions.size} vs {labels.size}"
        )
    if predictions.size == 0:
        raise DataError("RMSE of an empty set is undefined")
    return float(np.sqrt(np.mean((predictions - labels) ** 2)))


def per_content_rmse(predictions, labels, content_ids) -> pd.DataFrame:
    """One row per content: content_id, rmse, count, sorted by content_id"""
    frame = pd.DataFrame(
        {
            "content_id": np.asarray(content_ids, dtype=str).reshape(-1),
            "sq_error": (
                np.asarray(predictions, dtype=np.float64).reshape(-1)
                - np.asarray(labels, dtype=np.float64).reshape(-1)
            ) ** 2,
        }
    )
    grouped = frame.groupby("content_id", sort=True)["sq_error"].agg(["mean", "count"])
    return pd.DataFrame(
        {
            "content_id": grouped.index.astype(str),
            "rmse": np.sqrt(grouped["mean"].to_numpy()),
            "count": grouped["count"].to_numpy(dtype=np.int64),
        }
    ).reset_index(drop=True)


def recombine_rmse(table: pd.DataFrame) -> float:
    """Overall RMSE from a per-content table: sqrt of the count-weighted mean squared error"""
    counts = table["count"].to_numpy(dtype=np.float64)
    return float(np.sqrt(np.sum(counts * table["rmse"].to_numpy() ** 2) / counts.sum()))


def evaluate(
    model_name: str,
    country: str,
    content_type: ContentType,
    predictions: np.ndarray,
    labels: np.ndarray,
    content_ids: np.ndarray,
    test_date: Optional[date] = None,
    oracle: Optional[np.ndarray] = None,
) -> EvalReport:
    """Full report for one model on one test slice; an undefined AUC is logged and left empty"""
    labels = np.asarray(labels)
    try:
        score = auc(predictions, labels)
    except UndefinedAUCError as e:
        logger.warning("%s on %s/%s: %s", model_name, country, ContentType(content_type).value, e)
        score = None

    oracle_auc = None
    if oracle is not None and score is not None:
        oracle_auc = auc(oracle, labels)

    table = per_content_rmse(predictions, labels, content_ids)
    per_content: Dict[str, ContentRMSE] = {
        cid: ContentRMSE(rmse=float(err), count=int(n))
        for cid, err, n in zip(table["content_id"], table["rmse"], table["count"])
    }
    return EvalReport(
        model_name=model_name,
        country=country,
        content_type=content_type,
        auc=score,
        rmse=rmse(predictions, labels),
        per_content=per_content,
        num_examples=int(labels.size),
        positive_rate=float(labels.mean()) if labels.size else 0.0,
        oracle_auc=oracle_auc,
        test_date=test_date,
    )
