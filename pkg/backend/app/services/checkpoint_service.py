"""
Checkpoint persistence

File layout (all integers little-endian):

    bytes 0-3    magic b"CTRF"
    bytes 4-5    format version, unsigned 16-bit
    bytes 6-9    header length N in bytes, unsigned 32-bit
    bytes 10..   N bytes of UTF-8 JSON (CheckpointHeader)
    then         every tensor as little-endian float32, row-major, at the
                 offset the header lists for it (relative to payload start)
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import CheckpointError, CheckpointVersionError, FingerprintMismatchError
from app.models import CTRModel, build_model
from app.schemas.checkpoint import CheckpointHeader, NumericStats, TensorEntry
from app.schemas.config import ModelConfig
from app.schemas.events import ContentType
from app.services.feature_service import FeaturePipeline, FieldVocab

logger = logging.getLogger(__name__)

MAGIC = b"CTRF"
PREAMBLE = struct.Struct("<4sHI")
PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    content_type: ContentType
    pipeline: FeaturePipeline
    tensors: Dict[str, np.ndarray]
    format_version: int = field(default_factory=lambda: settings.CHECKPOINT_VERSION)

    @classmethod
    def from_model(cls, model: CTRModel, pipeline: FeaturePipeline, content_type: ContentType) -> "Checkpoint":
        return cls(
            model_config=model.config,
            content_type=ContentType(content_type),
            pipeline=pipeline,
            tensors=model.state_dict(),
        )

    @property
    def fingerprint(self) -> str:
        return self.pipeline.fingerprint

    def check_fingerprint(self, data_fingerprint: str) -> None:
        if data_fingerprint != self.fingerprint:
            raise FingerprintMismatchError(self.fingerprint, data_fingerprint)

    def build_model(self, dtype=np.float32) -> CTRModel:
        """Fresh model instance carrying the stored parameters"""
        model = build_model(
            self.model_config,
            self.pipeline.vocab_sizes(),
            num_numeric=len(self.pipeline.schema.numeric),
            dtype=dtype,
        )
        model.load_state_dict(self.tensors)
        return model

    def header(self) -> CheckpointHeader:
        entries = []
        offset = 0
        for name, values in self.tensors.items():
            entries.append(TensorEntry(name=name, shape=list(values.shape), offset=offset))
            offset += int(values.size) * PAYLOAD_DTYPE.itemsize
        return CheckpointHeader(
            format_version=self.format_version,
            schema_fingerprint=self.fingerprint,
            feature_schema=self.pipeline.resolved_schema,
            model=self.model_config,
            content_type=self.content_type,
            vocabularies={name: vocab.values for name, vocab in self.pipeline.vocabs.items()},
            numeric_stats=self.pipeline.stats,
            dtype=PAYLOAD_DTYPE.str,
            tensors=entries,
        )


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    header = ckpt.header().model_dump_json().encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(values, dtype=PAYLOAD_DTYPE).tobytes() for values in ckpt.tensors.values()
    )
    return PREAMBLE.pack(MAGIC, ckpt.format_version, len(header)) + header + payload


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(ckpt))
    logger.info("Saved checkpoint %s (%d tensors)", path, len(ckpt.tensors))
    return path


def parse_checkpoint(blob: bytes, expected_version: Optional[int] = None) -> Checkpoint:
    expected = settings.CHECKPOINT_VERSION if expected_version is None else expected_version
    if len(blob) < PREAMBLE.size:
        raise CheckpointError("Checkpoint is truncated (incomplete preamble)")
    magic, version, header_len = PREAMBLE.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic bytes)")
    if version != expected:
        raise CheckpointVersionError(version, expected)

    start = PREAMBLE.size
    if len(blob) < start + header_len:
        raise CheckpointError("Checkpoint is truncated (incomplete header)")
    try:
        header = CheckpointHeader.model_validate_json(blob[start:start + header_len])
    except ValidationError as e:
        raise CheckpointError(f"Checkpoint header is invalid: {e}") from e

    payload = memoryview(blob)[start + header_len:]
    dtype = np.dtype(header.dtype)
    tensors: Dict[str, np.ndarray] = {}
    for entry in header.tensors:
        count = int(np.prod(entry.shape, dtype=np.int64))
        end = entry.offset + count * dtype.itemsize
        if end > len(payload):
            raise CheckpointError(f"Checkpoint is truncated (tensor {entry.name})")
        values = np.frombuffer(payload[entry.offset:end], dtype=dtype, count=count)
        tensors[entry.name] = values.reshape(entry.shape).astype(np.float32)

    vocabs = {name: FieldVocab(name, values) for name, values in header.vocabularies.items()}
    stats = NumericStats.model_validate(header.numeric_stats.model_dump())
    pipeline = FeaturePipeline(header.feature_schema, vocabs, stats)
    if pipeline.fingerprint != header.schema_fingerprint:
        raise CheckpointError(
            f"Checkpoint header is inconsistent: stored fingerprint {header.schema_fingerprint}, "
            f"recomputed {pipeline.fingerprint}"
        )
    return Checkpoint(
        model_config=header.model,
        content_type=header.content_type,
        pipeline=pipeline,
        tensors=tensors,
        format_version=version,
    )


def load_checkpoint(path, expected_version: Optional[int] = None) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    return parse_checkpoint(blob, expected_version)
