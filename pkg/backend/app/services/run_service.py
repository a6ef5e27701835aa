"""
Run configuration loading, run-directory layout and data preparation
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import pandas as pd
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ConfigError
from app.schemas.config import Architecture, RunConfig
from app.schemas.events import ContentType
from app.schemas.report import Manifest
from app.services.dataset_service import EventLog, build_examples, downsample_negatives, ingest_logs, split
from app.services.feature_service import ExampleBatch, FeaturePipeline
from app.services.synth_service import CATALOG_FILE, GROUND_TRUTH_FILE, LOGS_FILE

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.ctrf"
METRICS_FILE = "metrics.csv"
EVAL_FILE = "eval.json"
PER_CONTENT_FILE = "per_content_rmse.csv"


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read and validate a run config; flag overrides are applied to the raw
    document first so architecture-dependent defaults resolve again.

    Recognized overrides: architecture, seed, content_type, num_users.
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "architecture" in overrides:
        raw["model"] = {**(raw.get("model") or {}), "architecture": overrides["architecture"]}
    if "seed" in overrides:
        raw["train"] = {**(raw.get("train") or {}), "seed": overrides["seed"]}
        if raw.get("synth") is not None:
            raw["synth"] = {**raw["synth"], "seed": overrides["seed"]}
    if "content_type" in overrides:
        raw["content_type"] = overrides["content_type"]
    if "num_users" in overrides:
        if raw.get("synth") is None:
            raise ConfigError("--users needs a 'synth' section in the run config")
        raw["synth"] = {**raw["synth"], "num_users": overrides["num_users"]}

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid run config: {e}") from e


@dataclass
class RunPaths:
    """Layout of one country's run directory"""
    root: Path
    logs_override: Optional[Path] = None

    @classmethod
    def from_config(cls, config: RunConfig) -> "RunPaths":
        workdir = Path(config.workdir or settings.WORKDIR)
        logs = Path(config.logs_path) if config.logs_path else None
        return cls(root=workdir / config.country, logs_override=logs)

    @property
    def logs(self) -> Path:
        return self.logs_override or self.root / LOGS_FILE

    @property
    def ground_truth(self) -> Path:
        return self.root / GROUND_TRUTH_FILE

    @property
    def catalog(self) -> Path:
        return self.root / CATALOG_FILE

    @property
    def manifest(self) -> Path:
        return self.root / MANIFEST_FILE

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def model_dir(self, content_type: ContentType, architecture: Architecture) -> Path:
        return self.root / ContentType(content_type).value / Architecture(architecture).value

    def checkpoint(self, content_type: ContentType, architecture: Architecture) -> Path:
        return self.model_dir(content_type, architecture) / CHECKPOINT_FILE

    def metrics(self, content_type: ContentType, architecture: Architecture) -> Path:
        return self.model_dir(content_type, architecture) / METRICS_FILE

    def eval_report(self, content_type: ContentType, architecture: Architecture) -> Path:
        return self.model_dir(content_type, architecture) / EVAL_FILE

    def per_content(self, content_type: ContentType, architecture: Architecture) -> Path:
        return self.model_dir(content_type, architecture) / PER_CONTENT_FILE

    def relative(self, path: Path) -> str:
        try:
            return Path(path).relative_to(self.root).as_posix()
        except ValueError:
            return str(path)


def write_manifest(
    paths: RunPaths,
    command: str,
    config_hash: str,
    inputs: Optional[Dict[str, str]] = None,
    artifacts: Iterable[Path] = (),
) -> Path:
    """Merge this command's inputs and artifacts into the run manifest"""
    manifest = Manifest(version=settings.VERSION, config_hash=config_hash)
    if paths.manifest.exists():
        try:
            manifest = Manifest.model_validate_json(paths.manifest.read_text(encoding="utf-8"))
        except ValidationError:
            logger.warning("Replacing unreadable manifest %s", paths.manifest)

    manifest.config_hash = config_hash
    manifest.version = settings.VERSION
    manifest.commands = sorted(set(manifest.commands) | {command})
    manifest.inputs.update(inputs or {})
    manifest.inputs = dict(sorted(manifest.inputs.items()))
    manifest.artifacts = sorted(set(manifest.artifacts) | {paths.relative(p) for p in artifacts})

    paths.root.mkdir(parents=True, exist_ok=True)
    paths.manifest.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return paths.manifest


@dataclass
class PreparedData:
    events: EventLog
    pipeline: FeaturePipeline
    train: Optional[ExampleBatch]
    val: Optional[ExampleBatch]
    test: ExampleBatch
    test_frame: pd.DataFrame


def prepare_data(
    config: RunConfig,
    paths: RunPaths,
    pipeline: Optional[FeaturePipeline] = None,
    events: Optional[EventLog] = None,
) -> PreparedData:
    """
    Ingest, build examples, split and encode.

    With ``pipeline`` given (evaluation), only the test slice is encoded and
    nothing is refitted.
    """
    events = events or ingest_logs(paths.logs)
    content_type = config.content_type
    examples = build_examples(events.frame, content_type)
    train_frame, val_frame, test_frame = split(examples, config.split)

    train_batch = val_batch = None
    if pipeline is None:
        train_frame = downsample_negatives(train_frame, config.train.negative_ratio, config.split.seed)
        pipeline = FeaturePipeline.fit(config.feature_schema, events.frame, train_frame)
        train_batch = pipeline.encode_frame(train_frame)
        val_batch = pipeline.encode_frame(val_frame)
        logger.info(
            "Split %s: train=%d val=%d test=%d",
            content_type.value, len(train_batch), len(val_batch), len(test_frame),
        )
    test_batch = pipeline.encode_frame(test_frame)
    return PreparedData(
        events=events,
        pipeline=pipeline,
        train=train_batch,
        val=val_batch,
        test=test_batch,
        test_frame=test_frame,
    )
