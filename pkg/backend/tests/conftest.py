"""
Shared fixtures for the test suite
"""

from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.schemas.config import ModelConfig, SynthConfig
from app.schemas.features import FeatureSchema, FieldKind, FieldSpec
from app.services.feature_service import FeaturePipeline

TESTDATA = Path(__file__).resolve().parent.parent / "testdata"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def testdata() -> Path:
    return TESTDATA


@pytest.fixture
def sample_logs(testdata) -> Path:
    return testdata / "sample_logs.csv"


@pytest.fixture
def sample_config(testdata) -> Path:
    return testdata / "sample_config.json"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_synth_config() -> SynthConfig:
    return SynthConfig(
        num_users=60,
        num_drugs=6,
        num_drug_families=2,
        num_video_modules=2,
        num_video_chapters=6,
        start_date=date(2021, 2, 9),
        num_days=22,
        num_archetypes=3,
        seed=11,
    )


def small_model_config(architecture: str, **overrides) -> ModelConfig:
    """Narrow model for fast forward passes and gradient checks"""
    values = dict(
        architecture=architecture,
        embedding_dim=3,
        hidden_units=[5, 4],
        cin_layer_sizes=[3, 2],
        attention_head_size=2,
        num_attention_heads=2,
    )
    values.update(overrides)
    return ModelConfig(**values)


def random_inputs(rng: np.random.Generator, vocab_sizes, batch: int, num_numeric: int = 0):
    categorical = np.stack([rng.integers(0, v, size=batch) for v in vocab_sizes], axis=1)
    numeric = rng.normal(size=(batch, num_numeric))
    labels = rng.integers(0, 2, size=batch).astype(np.float64)
    return categorical, numeric, labels


def toy_schema():
    return FeatureSchema(
        fields=[
            FieldSpec(name="user_id", kind=FieldKind.CATEGORICAL),
            FieldSpec(name="content_id", kind=FieldKind.CATEGORICAL),
            FieldSpec(name="user_content_clicks", kind=FieldKind.NUMERIC),
        ]
    )


@pytest.fixture
def toy_frame():
    """Users and contents where the label follows a planted user/content pattern"""
    rng = np.random.default_rng(99)
    n = 400
    users = rng.integers(0, 12, size=n)
    contents = rng.integers(0, 5, size=n)
    clicks = rng.poisson(1.0, size=n)
    labels = ((users % 3 == contents % 3) & (rng.random(n) < 0.9)).astype(int)
    return pd.DataFrame(
        {
            "user_id": [f"u{u:02d}" for u in users],
            "content_id": [f"c{c}" for c in contents],
            "user_content_clicks": clicks,
            "label": labels,
        }
    )


@pytest.fixture
def toy_pipeline(toy_frame):
    return FeaturePipeline.fit(toy_schema(), toy_frame, toy_frame)
