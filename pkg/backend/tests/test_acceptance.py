"""
End-to-end runs on generated logs (slow; enable with --runslow)
"""

from dataclasses import replace
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from app.schemas.config import ARCHITECTURE_ORDER, Architecture, ModelConfig, RunConfig, SynthConfig, TrainConfig
from app.schemas.events import ContentType
from app.services.dataset_service import ingest_logs
from app.services.metrics_service import auc, evaluate
from app.services.run_service import RunPaths, prepare_data
from app.services.synth_service import LOGS_FILE, generate_logs, oracle_scores
from app.services.training_service import predict, train

from conftest import small_model_config

pytestmark = pytest.mark.slow

# 41 days whose last two are the default test date and its label day
SHORT_START = date(2021, 1, 21)
SHORT_DAYS = 41

TRAINING = TrainConfig(epochs=2, batch_size=1024, learning_rate=0.005, seed=3)


def _model(architecture) -> ModelConfig:
    return ModelConfig(
        architecture=architecture,
        embedding_dim=8,
        hidden_units=[64, 32],
        cin_layer_sizes=[16, 16],
        attention_head_size=8,
    )


def _synthesize(root, synth_config: SynthConfig):
    """Write generated logs into the default run directory under ``root``"""
    synth = generate_logs(synth_config)
    synth.write(Path(root) / "synthetic")
    return synth, ingest_logs(Path(root) / "synthetic" / LOGS_FILE)


def _prepare(root, events, content_type=ContentType.DRUG):
    config = RunConfig(workdir=str(root), content_type=content_type, train=TRAINING)
    return prepare_data(config, RunPaths.from_config(config), events=events)


def _fit_and_score(synth, data, architecture, content_type=ContentType.DRUG):
    model = _model(architecture)
    result = train(model, data.train, data.val, TRAINING, data.pipeline.vocab_sizes(), content_type=content_type)
    probs = predict(result.checkpoint(data.pipeline, content_type), data.test)
    return evaluate(
        model.display_name,
        "synthetic",
        content_type,
        probs,
        data.test.labels,
        data.test.content_ids,
        oracle=oracle_scores(synth.ground_truth, data.test.user_ids, data.test.content_ids),
    )


@pytest.fixture(scope="module")
def default_reports(tmp_path_factory):
    """Every model on every content type, on logs generated with the default settings"""
    root = tmp_path_factory.mktemp("defaults")
    synth, events = _synthesize(root, SynthConfig())
    reports = {}
    for content_type in ContentType:
        data = _prepare(root, events, content_type)
        for architecture in ARCHITECTURE_ORDER:
            reports[content_type, architecture] = _fit_and_score(synth, data, architecture, content_type)
    return reports


@pytest.mark.parametrize("content_type", list(ContentType))
def test_oracle_separates_default_logs(default_reports, content_type):
    oracle = {default_reports[content_type, a].oracle_auc for a in ARCHITECTURE_ORDER}
    assert len(oracle) == 1
    assert oracle.pop() > 0.93


@pytest.mark.parametrize("content_type", list(ContentType))
def test_models_recover_planted_preferences(default_reports, content_type):
    scores = [default_reports[content_type, a].auc for a in ARCHITECTURE_ORDER]
    assert all(s is not None for s in scores)
    assert min(scores) >= 0.85, scores
    assert sum(s >= 0.90 for s in scores) >= 3, scores


def test_fewer_users_costs_little(tmp_path, default_reports):
    synth, events = _synthesize(tmp_path, SynthConfig(num_users=300))
    small = _fit_and_score(synth, _prepare(tmp_path, events), Architecture.DEEPFM)
    full = default_reports[ContentType.DRUG, Architecture.DEEPFM]
    assert full.auc - small.auc < 0.05


def test_null_signal_is_chance(tmp_path):
    config = SynthConfig(start_date=SHORT_START, num_days=SHORT_DAYS, signal_strength=0.0, base_click_prob=0.05)
    synth, events = _synthesize(tmp_path, config)
    data = _prepare(tmp_path, events)
    for architecture in ARCHITECTURE_ORDER:
        report = _fit_and_score(synth, data, architecture)
        assert 0.45 <= report.auc <= 0.55, (architecture, report.auc)


def test_permuted_labels_are_chance(tmp_path):
    _, events = _synthesize(tmp_path, SynthConfig(start_date=SHORT_START, num_days=SHORT_DAYS))
    data = _prepare(tmp_path, events)
    rng = np.random.default_rng(17)
    shuffled = {
        name: replace(batch, labels=rng.permutation(batch.labels))
        for name, batch in (("train", data.train), ("val", data.val), ("test", data.test))
    }
    for architecture in ARCHITECTURE_ORDER:
        result = train(_model(architecture), shuffled["train"], shuffled["val"], TRAINING, data.pipeline.vocab_sizes())
        probs = predict(result.checkpoint(data.pipeline, ContentType.DRUG), shuffled["test"])
        score = auc(probs, shuffled["test"].labels)
        assert 0.45 <= score <= 0.55, (architecture, score)


def test_training_loss_falls_across_seeds(toy_pipeline, toy_frame):
    batch = toy_pipeline.encode_frame(toy_frame)
    falling = 0
    for seed in range(20):
        result = train(
            small_model_config("deepfm"),
            batch,
            None,
            TrainConfig(epochs=5, batch_size=32, learning_rate=0.01, seed=seed),
            toy_pipeline.vocab_sizes(),
        )
        losses = np.array([row.train_loss for row in result.history])
        falling += bool(losses[-1] <= losses[0])
    assert falling >= 18
