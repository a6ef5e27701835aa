"""
ctrforge command line
Main application entry point
"""

import functools
import logging
from pathlib import Path
from typing import List, Optional

import click
import numpy as np

from app.core.config import settings
from app.core.errors import ConfigError, CTRForgeError
from app.core.log import configure_logging
from app.schemas.config import ARCHITECTURE_ORDER, Architecture, ModelConfig, RunConfig
from app.schemas.events import CONTENT_TYPE_ORDER, ContentType
from app.services.checkpoint_service import load_checkpoint, save_checkpoint
from app.services.dataset_service import ingest_logs
from app.services.metrics_service import evaluate as evaluate_predictions
from app.services.recommend_service import recommend as recommend_for_user
from app.services.report_service import (
    aligned_text,
    collect_reports,
    daily_clicks,
    metric_table,
    per_content_table,
    write_tables,
)
from app.services.run_service import RunPaths, load_run_config, prepare_data, write_manifest
from app.services.synth_service import generate_logs, load_ground_truth, oracle_scores
from app.services.training_service import predict, train, write_metrics_csv

logger = logging.getLogger(__name__)

MODEL_CHOICES = [a.value for a in ARCHITECTURE_ORDER] + ["all"]
CONTENT_TYPE_CHOICES = [c.value for c in CONTENT_TYPE_ORDER]


def handle_errors(command):
    """Turn toolkit errors into a message and the error's exit code"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except CTRForgeError as e:
            logger.debug("Command failed", exc_info=True)
            click.echo(f"Error: {e}", err=True)
            click.get_current_context().exit(e.exit_code)

    return wrapper


def config_option(command):
    return click.option(
        "--config", "config_path", type=click.Path(dir_okay=False), default=None,
        help="Run config JSON file",
    )(command)


def model_option(command):
    return click.option(
        "--model", type=click.Choice(MODEL_CHOICES), default=None,
        help="Architecture; overrides the config. 'all' runs every model.",
    )(command)


def content_type_option(command):
    return click.option(
        "--content-type", type=click.Choice(CONTENT_TYPE_CHOICES), default=None,
        help="Content type to model; overrides the config",
    )(command)


def seed_option(command):
    return click.option("--seed", type=int, default=None, help="Seed override")(command)


def force_option(command):
    return click.option("--force", is_flag=True, help="Overwrite existing outputs")(command)


def _load(config_path, model=None, seed=None, content_type=None, users=None) -> RunConfig:
    architecture = None if model in (None, "all") else model
    return load_run_config(
        config_path,
        {"architecture": architecture, "seed": seed, "content_type": content_type, "num_users": users},
    )


def _architectures(config: RunConfig, model: Optional[str]) -> List[Architecture]:
    if model == "all":
        return list(ARCHITECTURE_ORDER)
    return [config.model.architecture]


def _model_config(config: RunConfig, architecture: Architecture) -> ModelConfig:
    """The configured model, or the same hyperparameters under another architecture's defaults"""
    if architecture == config.model.architecture:
        return config.model
    base = config.model.model_dump(exclude={"activation", "dropout"})
    return ModelConfig.model_validate({**base, "architecture": architecture})


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.version_option(settings.VERSION, prog_name=settings.APP_NAME)
def cli(verbose: bool):
    """CTR prediction toolkit: synth, train, evaluate, recommend, report"""
    configure_logging("DEBUG" if verbose else None)


@cli.command()
@config_option
@seed_option
@force_option
@click.option("--users", type=click.IntRange(min=1), default=None, help="Override the number of synthetic users")
@click.option("--country", default=None, help="Country / dataset tag; overrides the config")
@handle_errors
def synth(config_path, seed, force, users, country):
    """Generate synthetic logs, ground truth and catalog"""
    config = _load(config_path, seed=seed, users=users)
    if config.synth is None:
        raise ConfigError("Run config has no 'synth' section")
    if country:
        config = config.model_copy(update={"country": country})

    paths = RunPaths.from_config(config)
    result = generate_logs(config.synth)
    written = result.write(paths.root, force=force)
    write_manifest(paths, "synth", config.config_hash(), artifacts=written.values())

    counts = result.logs["content_type"].value_counts()
    click.echo(f"Wrote {len(result.logs)} events for {config.synth.num_users} users to {paths.root}")
    for content_type in CONTENT_TYPE_ORDER:
        click.echo(f"  {content_type.value:<14} {int(counts.get(content_type.value, 0))}")


@cli.command(name="train")
@config_option
@model_option
@content_type_option
@seed_option
@force_option
@handle_errors
def train_cmd(config_path, model, content_type, seed, force):
    """Build examples from the logs and train one or all models"""
    config = _load(config_path, model, seed, content_type)
    paths = RunPaths.from_config(config)
    architectures = _architectures(config, model)

    for architecture in architectures:
        target = paths.checkpoint(config.content_type, architecture)
        if target.exists() and not force:
            raise ConfigError(f"Checkpoint {target} exists (use --force)")

    data = prepare_data(config, paths)
    dtype = np.dtype(settings.FLOAT_DTYPE)
    artifacts = []
    for architecture in architectures:
        model_config = _model_config(config, architecture)
        result = train(
            model_config,
            data.train,
            data.val,
            config.train,
            data.pipeline.vocab_sizes(),
            content_type=config.content_type,
            dtype=dtype,
        )
        ckpt = result.checkpoint(data.pipeline, config.content_type)
        artifacts.append(save_checkpoint(ckpt, paths.checkpoint(config.content_type, architecture)))
        artifacts.append(write_metrics_csv(result.history, paths.metrics(config.content_type, architecture)))

        last = result.history[-1]
        val_auc = "n/a" if last.val_auc is None else f"{last.val_auc:.4f}"
        click.echo(
            f"{model_config.display_name} [{config.content_type.value}] "
            f"epochs={last.epoch} train_loss={last.train_loss:.5f} val_auc={val_auc}"
        )

    write_manifest(paths, "train", config.config_hash(), inputs={"logs": str(paths.logs)}, artifacts=artifacts)


@cli.command(name="evaluate")
@config_option
@model_option
@content_type_option
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False), default=None,
              help="Checkpoint to evaluate; defaults to the run directory's")
@handle_errors
def evaluate_cmd(config_path, model, content_type, checkpoint_path):
    """Score the test date and write AUC / RMSE reports"""
    config = _load(config_path, model, None, content_type)
    paths = RunPaths.from_config(config)
    architectures = _architectures(config, model)
    if checkpoint_path and len(architectures) > 1:
        raise ConfigError("--checkpoint names a single model; drop --model all")

    events = ingest_logs(paths.logs)
    truth = load_ground_truth(paths.ground_truth)
    artifacts = []
    for architecture in architectures:
        source = Path(checkpoint_path) if checkpoint_path else paths.checkpoint(config.content_type, architecture)
        if not source.exists():
            if model == "all":
                logger.warning("No checkpoint for %s; skipping", architecture.value)
                continue
            raise ConfigError(f"Checkpoint {source} not found; run train first")
        ckpt = load_checkpoint(source)
        if ckpt.content_type != config.content_type:
            raise ConfigError(
                f"Checkpoint was trained on {ckpt.content_type.value}, config asks for {config.content_type.value}"
            )

        data = prepare_data(config, paths, pipeline=ckpt.pipeline, events=events)
        probs = predict(ckpt, data.test)
        oracle = None
        if truth is not None:
            oracle = oracle_scores(truth, data.test.user_ids, data.test.content_ids)
        report = evaluate_predictions(
            ckpt.model_config.display_name,
            config.country,
            config.content_type,
            probs,
            data.test.labels,
            data.test.content_ids,
            test_date=config.split.test_date,
            oracle=oracle,
        )

        arch = ckpt.model_config.architecture
        eval_path = paths.eval_report(config.content_type, arch)
        eval_path.parent.mkdir(parents=True, exist_ok=True)
        eval_path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        per_content_path = paths.per_content(config.content_type, arch)
        per_content_table([report]).to_csv(per_content_path, index=False, lineterminator="\n")
        artifacts += [eval_path, per_content_path]

        auc_text = "undefined" if report.auc is None else f"{report.auc:.4f}"
        click.echo(
            f"{report.model_name} [{config.content_type.value}/{config.country}] "
            f"AUC={auc_text} RMSE={report.rmse:.4f} n={report.num_examples} "
            f"positive_rate={report.positive_rate:.4f}"
        )

    written = write_tables(collect_reports(paths.root), paths.reports)
    artifacts += list(written.values())
    write_manifest(paths, "evaluate", config.config_hash(), inputs={"logs": str(paths.logs)}, artifacts=artifacts)


@cli.command(name="recommend")
@config_option
@model_option
@content_type_option
@click.option("--user-id", required=True, help="User to recommend for")
@click.option("--k", "k", type=click.IntRange(min=1), default=None, help="Number of recommendations")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False), default=None)
@handle_errors
def recommend_cmd(config_path, model, content_type, user_id, k, checkpoint_path):
    """Rank the catalog for one user by predicted click probability"""
    if model == "all":
        raise ConfigError("recommend needs a single --model")
    config = _load(config_path, model, None, content_type)
    paths = RunPaths.from_config(config)
    source = Path(checkpoint_path) if checkpoint_path else paths.checkpoint(config.content_type, config.model.architecture)
    if not source.exists():
        raise ConfigError(f"Checkpoint {source} not found; run train first")

    ckpt = load_checkpoint(source)
    events = ingest_logs(paths.logs)
    ranking = recommend_for_user(ckpt, events, user_id, k or config.recommend_k)

    out = paths.model_dir(ckpt.content_type, ckpt.model_config.architecture) / "recommendations" / f"{user_id}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(ranking.model_dump_json(indent=2) + "\n", encoding="utf-8")
    write_manifest(paths, "recommend", config.config_hash(), inputs={"logs": str(paths.logs)}, artifacts=[out])
    click.echo(ranking.model_dump_json(indent=2))


@cli.command(name="report")
@config_option
@handle_errors
def report_cmd(config_path):
    """Aggregate every evaluation under the workdir into model-by-dataset tables"""
    config = _load(config_path)
    workdir = Path(config.workdir or settings.WORKDIR)
    reports = collect_reports(workdir)
    if not reports:
        raise ConfigError(f"No evaluation reports under {workdir}; run evaluate first")

    write_tables(reports, workdir / "reports")
    for country in sorted({r.country for r in reports}):
        paths = RunPaths(root=workdir / country)
        artifacts = list(write_tables([r for r in reports if r.country == country], paths.reports).values())
        if paths.logs.exists():
            clicks_path = paths.reports / "daily_clicks.csv"
            daily_clicks(ingest_logs(paths.logs).frame).to_csv(clicks_path, index=False, lineterminator="\n")
            artifacts.append(clicks_path)
        write_manifest(paths, "report", config.config_hash(), artifacts=artifacts)

    click.echo(aligned_text(metric_table(reports, "auc"), "AUC per model"))
    click.echo(aligned_text(metric_table(reports, "rmse"), "RMSE per model"))


def main():
    cli(prog_name=settings.APP_NAME)


if __name__ == "__main__":
    main()
