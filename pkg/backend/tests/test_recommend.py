"""
Top-K recommendations from a trained checkpoint
"""

import logging
from datetime import date

import numpy as np
import pytest

from app.core.errors import ConfigError
from app.schemas.config import RunConfig, SynthConfig, TrainConfig
from app.schemas.events import ContentType
from app.services.recommend_service import recommend
from app.services.run_service import RunPaths, prepare_data
from app.services.synth_service import generate_logs
from app.services.training_service import train

from conftest import small_model_config


@pytest.fixture
def trained(sample_logs, tmp_path):
    config = RunConfig(
        logs_path=str(sample_logs),
        workdir=str(tmp_path),
        model=small_model_config("deepfm"),
        train=TrainConfig(epochs=2, batch_size=4),
    )
    data = prepare_data(config, RunPaths.from_config(config))
    result = train(config.model, data.train, data.val, config.train, data.pipeline.vocab_sizes())
    return result.checkpoint(data.pipeline, ContentType.DRUG), data.events


def test_ranks_whole_catalog(trained):
    ckpt, events = trained
    ranking = recommend(ckpt, events, "u1", k=5)
    assert ranking.user_id == "u1"
    assert ranking.generated_at == date(2021, 3, 2)
    assert sorted(item.content_id for item in ranking.items) == ["misoprostol", "oxytocin"]
    probs = [item.probability for item in ranking.items]
    assert probs == sorted(probs, reverse=True)
    assert all(0.0 < p < 1.0 for p in probs)


def test_k_truncates(trained):
    ckpt, events = trained
    full = recommend(ckpt, events, "u2", k=2)
    top = recommend(ckpt, events, "u2", k=1)
    assert [i.content_id for i in top.items] == [full.items[0].content_id]


def test_recommendations_are_deterministic(trained):
    ckpt, events = trained
    assert recommend(ckpt, events, "u3", k=2) == recommend(ckpt, events, "u3", k=2)


def test_unknown_user_is_scored_with_warning(trained, caplog):
    ckpt, events = trained
    with caplog.at_level(logging.WARNING):
        ranking = recommend(ckpt, events, "newcomer", k=2)
    assert len(ranking.items) == 2
    assert "unknown" in caplog.text


def test_non_positive_k(trained):
    ckpt, events = trained
    with pytest.raises(ConfigError):
        recommend(ckpt, events, "u1", k=0)


def test_ties_break_by_content_id(trained, monkeypatch):
    ckpt, events = trained
    monkeypatch.setattr(
        "app.services.recommend_service.predict", lambda checkpoint, batch: np.full(len(batch), 0.25)
    )
    ranking = recommend(ckpt, events, "u1", k=2)
    assert [i.content_id for i in ranking.items] == ["misoprostol", "oxytocin"]


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    synth = generate_logs(
        SynthConfig(
            num_users=80, num_drugs=12, num_drug_families=4, num_video_modules=2, num_video_chapters=4,
            start_date=date(2021, 2, 9), num_days=22, num_archetypes=4, seed=11,
        )
    )
    written = synth.write(root)
    config = RunConfig(
        logs_path=str(written["logs"]),
        workdir=str(root),
        model=small_model_config("deepfm"),
        train=TrainConfig(epochs=5, batch_size=64, learning_rate=0.01),
    )
    data = prepare_data(config, RunPaths.from_config(config))
    result = train(config.model, data.train, data.val, config.train, data.pipeline.vocab_sizes())
    return synth, result.checkpoint(data.pipeline, ContentType.DRUG), data.events


def test_planted_drugs_fill_the_top(planted):
    synth, ckpt, events = planted
    drugs = synth.catalog.of_type(ContentType.DRUG)["content_id"].tolist()
    truth = synth.ground_truth.set_index("user_id")[drugs]
    # archetype-matched or familiar drugs
    favoured = truth > SynthConfig().base_click_prob

    hits = shown = 0
    for user in truth.index[:40]:
        ranking = recommend(ckpt, events, user, k=3)
        hits += int(sum(favoured.loc[user, item.content_id] for item in ranking.items))
        shown += len(ranking.items)
    base_rate = favoured.to_numpy().mean()
    assert shown == 120
    assert hits / shown > base_rate + 0.2
