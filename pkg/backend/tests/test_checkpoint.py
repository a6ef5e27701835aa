"""
Checkpoint format: round trip, determinism and injected faults
"""

import json

import numpy as np
import pytest

from app.core.errors import CheckpointError, CheckpointVersionError, FingerprintMismatchError
from app.schemas.config import TrainConfig
from app.schemas.events import ContentType
from app.services.checkpoint_service import (
    MAGIC,
    PREAMBLE,
    checkpoint_bytes,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)
from app.services.feature_service import FeaturePipeline
from app.services.training_service import predict, train

from conftest import small_model_config, toy_schema


def _checkpoint(pipeline, frame, architecture="difm", seed=3):
    batch = pipeline.encode_frame(frame)
    result = train(
        small_model_config(architecture),
        batch,
        None,
        TrainConfig(epochs=1, batch_size=64, seed=seed),
        pipeline.vocab_sizes(),
        content_type=ContentType.VIDEO_CHAPTER,
    )
    return result.checkpoint(pipeline, ContentType.VIDEO_CHAPTER)


@pytest.fixture
def ckpt(toy_pipeline, toy_frame):
    return _checkpoint(toy_pipeline, toy_frame)


@pytest.mark.parametrize("architecture", ["pnn", "deepfm", "xdeepfm", "difm"])
def test_round_trip_is_bit_identical(tmp_path, toy_pipeline, toy_frame, architecture):
    ckpt = _checkpoint(toy_pipeline, toy_frame, architecture)
    loaded = load_checkpoint(save_checkpoint(ckpt, tmp_path / "model" / "checkpoint.ctrf"))

    assert loaded.model_config == ckpt.model_config
    assert loaded.content_type == ContentType.VIDEO_CHAPTER
    assert list(loaded.tensors) == list(ckpt.tensors)
    for name, values in ckpt.tensors.items():
        assert loaded.tensors[name].dtype == np.float32
        np.testing.assert_array_equal(loaded.tensors[name], values)
    assert loaded.pipeline.vocabs == toy_pipeline.vocabs
    assert loaded.pipeline.stats == toy_pipeline.stats

    batch = toy_pipeline.encode_frame(toy_frame)
    np.testing.assert_array_equal(predict(loaded, batch), predict(ckpt, batch))


def test_bytes_are_deterministic(toy_pipeline, toy_frame):
    first = checkpoint_bytes(_checkpoint(toy_pipeline, toy_frame))
    second = checkpoint_bytes(_checkpoint(toy_pipeline, toy_frame))
    assert first == second
    assert checkpoint_bytes(_checkpoint(toy_pipeline, toy_frame, seed=4)) != first


def test_preamble_layout(ckpt):
    blob = checkpoint_bytes(ckpt)
    magic, version, header_len = PREAMBLE.unpack_from(blob, 0)
    assert blob[:4] == MAGIC == b"CTRF"
    assert version == 1
    header = json.loads(blob[10:10 + header_len])
    assert header["schema_fingerprint"] == ckpt.fingerprint
    assert header["dtype"] == "<f4"
    payload = len(blob) - 10 - header_len
    assert payload == 4 * sum(v.size for v in ckpt.tensors.values())


def test_bumped_version_is_rejected(ckpt):
    blob = bytearray(checkpoint_bytes(ckpt))
    blob[4] += 1
    with pytest.raises(CheckpointVersionError) as info:
        parse_checkpoint(bytes(blob))
    assert (info.value.found, info.value.expected) == (2, 1)
    assert "2" in str(info.value) and "1" in str(info.value)


def test_truncated_file_is_rejected(ckpt):
    blob = checkpoint_bytes(ckpt)
    for cut in (3, PREAMBLE.size + 5, len(blob) - 1):
        with pytest.raises(CheckpointError):
            parse_checkpoint(blob[:cut])


def test_bad_magic_is_rejected(ckpt):
    with pytest.raises(CheckpointError):
        parse_checkpoint(b"NOPE" + checkpoint_bytes(ckpt)[4:])


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ctrf")


def test_other_schema_is_a_fingerprint_error(ckpt, toy_frame):
    schema = toy_schema()
    other = FeaturePipeline.fit(
        schema.model_copy(update={"fields": list(reversed(schema.fields))}), toy_frame, toy_frame
    )
    with pytest.raises(FingerprintMismatchError):
        predict(ckpt, other.encode_frame(toy_frame))
    with pytest.raises(FingerprintMismatchError):
        ckpt.check_fingerprint(other.fingerprint)


def test_rebuilt_model_matches_training_model(toy_pipeline, toy_frame):
    batch = toy_pipeline.encode_frame(toy_frame)
    result = train(
        small_model_config("xdeepfm"),
        batch,
        None,
        TrainConfig(epochs=1, batch_size=64, seed=2),
        toy_pipeline.vocab_sizes(),
    )
    ckpt = result.checkpoint(toy_pipeline, ContentType.DRUG)
    np.testing.assert_array_equal(
        predict(ckpt, batch, model=result.model),
        predict(parse_checkpoint(checkpoint_bytes(ckpt)), batch),
    )
