"""Command line interface for the experiment pipeline."""

from __future__ import annotations

import functools
import os

import click

from .errors import ConfigError, MissingDependencyError
from .pipeline import ExperimentConfig, run_ablation, run_pipeline

DATASET_ENV = "CARDIACUQ_DATASET_ROOT"


def _load_config(config_path: str, dataset_root: str | None, output_root: str | None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(config_path)
    payload = cfg.to_json()
    env_root = os.environ.get(DATASET_ENV)
    if dataset_root:
        payload["dataset_root"] = dataset_root
    elif env_root:
        payload["dataset_root"] = env_root
    if output_root:
        payload["output_root"] = output_root
    return ExperimentConfig.from_json(payload)


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            raise SystemExit(2)
        except MissingDependencyError as exc:
            click.echo(f"missing dependency: {exc}", err=True)
            raise SystemExit(3)

    return wrapper


def _common(fn):
    fn = click.option("--config", "-c", "config_path", required=True, type=click.Path(exists=True))(fn)
    fn = click.option("--dataset-root", default=None, help=f"overrides config and ${DATASET_ENV}")(fn)
    fn = click.option("--output-root", default=None)(fn)
    fn = click.option("--force", is_flag=True, help="re-run even if the stage completed")(fn)
    return fn


@click.group()
def main():
    """Cardiac MR segmentation with failure detection and correction."""


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--patients", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
def phantom(out, patients, seed):
    """Generate a synthetic phantom dataset in the ACDC layout."""
    from .phantom import generate_phantom_dataset

    ids = generate_phantom_dataset(out, n_patients=patients, seed=seed)
    click.echo(f"wrote {len(ids)} phantom patients under {out}")


def _stage_command(name: str, stage: str):
    @main.command(name=name)
    @_common
    @click.option("--fold", default=None, type=int, help="restrict to one fold")
    @_exit_codes
    def cmd(config_path, dataset_root, output_root, force, fold):
        cfg = _load_config(config_path, dataset_root, output_root)
        if fold is not None:
            payload = cfg.to_json()
            payload["folds"] = [fold]
            cfg = ExperimentConfig.from_json(payload)
        status = run_pipeline(cfg, [stage], force=force)
        for s, outcome in status.items():
            click.echo(f"{s}: {outcome}")

    cmd.__name__ = name.replace("-", "_")
    return cmd


_stage_command("ingest", "ingest")
_stage_command("train-seg", "train-seg")
_stage_command("infer", "infer")
_stage_command("umap", "umap")
_stage_command("oracle", "oracle")
_stage_command("train-detect", "train-detect")
_stage_command("detect", "detect")
_stage_command("report", "report")


@main.command()
@_common
@click.option("--fold", default=None, type=int)
@click.option("--mode", type=click.Choice(["simulate", "serve"]), default="simulate", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8011, show_default=True)
@_exit_codes
def correct(config_path, dataset_root, output_root, force, fold, mode, host, port):
    """Apply corrections: simulated (reference labels) or an expert review server."""
    cfg = _load_config(config_path, dataset_root, output_root)
    if fold is not None:
        payload = cfg.to_json()
        payload["folds"] = [fold]
        cfg = ExperimentConfig.from_json(payload)
    if mode == "simulate":
        status = run_pipeline(cfg, ["correct"], force=force)
        for s, outcome in status.items():
            click.echo(f"{s}: {outcome}")
        return
    import uvicorn

    from .service.app import create_app

    app = create_app(cfg, fold=cfg.folds[0], token=os.environ.get("CARDIACUQ_TOKEN"))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@_common
@click.option("--fold", default=0, type=int, show_default=True)
@click.option(
    "--kind",
    type=click.Choice(["mc_samples", "patch_size", "tolerance"]),
    required=True,
)
@_exit_codes
def ablate(config_path, dataset_root, output_root, force, fold, kind):
    """Parameter sweeps: MC samples T, detector patch size, tolerance threshold."""
    cfg = _load_config(config_path, dataset_root, output_root)
    rows = run_ablation(kind, cfg, fold)
    for row in rows:
        click.echo(", ".join(f"{k}={v}" for k, v in row.items()))


if __name__ == "__main__":
    main()
