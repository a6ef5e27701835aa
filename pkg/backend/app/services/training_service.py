"""
Mini-batch training with Adam and batched inference
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from app.autodiff import AdamState, GradTape, adam_step, grad
from app.autodiff.ops import binary_cross_entropy_with_logits
from app.core.errors import DataError, NumericError, UndefinedAUCError
from app.models import CTRModel, build_model
from app.schemas.config import ModelConfig, TrainConfig
from app.schemas.events import ContentType
from app.schemas.report import EpochMetrics
from app.services.checkpoint_service import Checkpoint
from app.services.feature_service import ExampleBatch, FeaturePipeline
from app.services.metrics_service import auc

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["epoch", "train_loss", "val_loss", "val_auc"]
PREDICT_CHUNK = 8192


@dataclass
class TrainResult:
    model: CTRModel
    history: List[EpochMetrics] = field(default_factory=list)

    def checkpoint(self, pipeline: FeaturePipeline, content_type: ContentType) -> Checkpoint:
        return Checkpoint.from_model(self.model, pipeline, content_type)


def _logits(model: CTRModel, batch: ExampleBatch) -> np.ndarray:
    out = np.empty(len(batch), dtype=np.float64)
    for start in range(0, len(batch), PREDICT_CHUNK):
        rows = slice(start, start + PREDICT_CHUNK)
        logits = model.forward(batch.categorical[rows], batch.numeric[rows], training=False)
        out[rows] = logits.data.reshape(-1)
    return out


def log_loss_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


class Trainer:
    """Owns one model and its optimizer state for the length of a run"""

    def __init__(self, model: CTRModel, config: TrainConfig):
        self.model = model
        self.config = config
        self.optimizer = AdamState(lr=config.learning_rate)
        self.rng = np.random.default_rng(config.seed)

    def train_epoch(self, batch: ExampleBatch, epoch: int) -> float:
        """One shuffled pass; returns the example-weighted mean training loss"""
        n = len(batch)
        order = self.rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, self.config.batch_size)):
            rows = order[start:start + self.config.batch_size]
            with GradTape() as tape:
                tape.watch(self.model.params)
                logits = self.model.forward(
                    batch.categorical[rows], batch.numeric[rows], training=True, rng=self.rng
                )
                loss = binary_cross_entropy_with_logits(logits, batch.labels[rows])

            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"Non-finite loss at epoch {epoch}, batch {b}", epoch=epoch, batch=b)
            adam_step(self.optimizer, self.model.params, grad(tape, loss))
            total += value * rows.size
        return total / n

    def validate(self, batch: Optional[ExampleBatch]):
        if batch is None or len(batch) == 0:
            return None, None
        logits = _logits(self.model, batch)
        val_loss = log_loss_from_logits(logits, batch.labels)
        try:
            val_auc = auc(logits, batch.labels)
        except UndefinedAUCError:
            val_auc = None
        return val_loss, val_auc

    def fit(self, train_batch: ExampleBatch, val_batch: Optional[ExampleBatch], epochs: int) -> List[EpochMetrics]:
        history: List[EpochMetrics] = []
        best_auc, best_state, stale = -np.inf, None, 0
        for epoch in range(1, epochs + 1):
            train_loss = self.train_epoch(train_batch, epoch)
            val_loss, val_auc = self.validate(val_batch)
            history.append(EpochMetrics(epoch=epoch, train_loss=train_loss, val_loss=val_loss, val_auc=val_auc))
            logger.info(
                "%s epoch %d/%d train_loss=%.5f val_loss=%s val_auc=%s",
                self.model.name, epoch, epochs, train_loss,
                "n/a" if val_loss is None else f"{val_loss:.5f}",
                "n/a" if val_auc is None else f"{val_auc:.4f}",
            )

            if not self.config.early_stopping or val_auc is None:
                continue
            if val_auc > best_auc:
                best_auc, best_state, stale = val_auc, self.model.state_dict(), 0
            else:
                stale += 1
                if stale >= self.config.patience:
                    logger.info("Early stop after epoch %d; best val_auc=%.4f", epoch, best_auc)
                    break

        if best_state is not None:
            self.model.load_state_dict(best_state)
        return history


def train(
    model_config: ModelConfig,
    train_batch: ExampleBatch,
    val_batch: Optional[ExampleBatch],
    train_config: TrainConfig,
    vocab_sizes: List[int],
    content_type: ContentType = ContentType.DRUG,
    dtype=np.float32,
) -> TrainResult:
    """Build a seeded model and fit it for the configured number of epochs"""
    if len(train_batch) == 0:
        raise DataError("Training set is empty")
    model = build_model(
        model_config,
        vocab_sizes,
        num_numeric=train_batch.numeric.shape[1],
        seed=train_config.seed,
        dtype=dtype,
    )
    epochs = train_config.resolve_epochs(content_type)
    logger.info(
        "Training %s on %d examples (%d positive) for %d epochs, %d parameters",
        model.name, len(train_batch), int(train_batch.labels.sum()), epochs, model.num_parameters(),
    )
    history = Trainer(model, train_config).fit(train_batch, val_batch, epochs)
    return TrainResult(model=model, history=history)


def predict(checkpoint: Checkpoint, batch: ExampleBatch, model: Optional[CTRModel] = None) -> np.ndarray:
    """Click probability per example with dropout off; batch must match the checkpoint schema"""
    checkpoint.check_fingerprint(batch.fingerprint)
    model = model or checkpoint.build_model()
    probs = np.empty(len(batch), dtype=np.float64)
    for start in range(0, len(batch), PREDICT_CHUNK):
        rows = slice(start, start + PREDICT_CHUNK)
        probs[rows] = model.predict_proba(batch.categorical[rows], batch.numeric[rows])
    if not np.isfinite(probs).all():
        raise NumericError("Non-finite predictions")
    return probs


def write_metrics_csv(history: List[EpochMetrics], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row.model_dump() for row in history], columns=METRICS_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
