"""Command-line surface: train, unlearn, simulate, report.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure
(decoding, divergence, tampered run directories).  The output directory
resolves as --out, then $FUSIM_OUT, then the config's out_dir.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from pathlib import Path

import click

from .coding import AuthorizationError, DecodeFailure
from .config import ConfigError, ExperimentConfig, ManifestError
from .federation import HistoryNotFound
from .models import TrainingDivergenceError
from .pipeline import cmd_report, cmd_simulate, cmd_train, cmd_unlearn
from .unlearning import EmptyRetainedError

_RUNTIME_ERRORS = (
    DecodeFailure,
    ManifestError,
    AuthorizationError,
    HistoryNotFound,
    TrainingDivergenceError,
    EmptyRetainedError,
)


def _load_config(config_path: str | None, seed: int | None, mode: str | None) -> ExperimentConfig:
    if config_path is None:
        config = ExperimentConfig()
    else:
        config = ExperimentConfig.from_file(config_path)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if mode is not None:
        overrides["storage_mode"] = mode
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config.validate()


def _out_dir(out: str | None, config: ExperimentConfig) -> Path:
    return Path(out or os.environ.get("FUSIM_OUT") or config.out_dir)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


_common = [
    click.option("--config", "config_path", type=click.Path(exists=False), default=None),
    click.option("--seed", type=int, default=None, help="Override the config seed."),
    click.option(
        "--mode",
        type=click.Choice(["uncoded", "coded"]),
        default=None,
        help="Override the storage mode.",
    ),
    click.option("--out", type=click.Path(), default=None, help="Output directory."),
    click.option("--force", is_flag=True, help="Redo even if a manifest exists."),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Federated unlearning simulator: sharded training, calibrated removal."""


@main.command()
@_with_common
def train(config_path, seed, mode, out, force) -> None:
    """Train every shard and persist models plus the round history."""
    try:
        config = _load_config(config_path, seed, mode)
        manifest = cmd_train(config, _out_dir(out, config), force=force)
    except (ConfigError, FileNotFoundError) as exc:
        _fail(2, str(exc))
    except _RUNTIME_ERRORS as exc:
        _fail(3, str(exc))
    else:
        click.echo(f"train: {len(manifest.artifacts)} artifacts, config {manifest.config_hash[:12]}")


@main.command()
@_with_common
@click.option(
    "--method",
    type=click.Choice(["SE", "FR", "FE"], case_sensitive=False),
    default="SE",
    show_default=True,
)
def unlearn(config_path, seed, mode, out, force, method) -> None:
    """Serve the configured unlearning workload with one method."""
    try:
        config = _load_config(config_path, seed, mode)
        manifest = cmd_unlearn(config, _out_dir(out, config), method, force=force)
    except (ConfigError, FileNotFoundError) as exc:
        _fail(2, str(exc))
    except _RUNTIME_ERRORS as exc:
        _fail(3, str(exc))
    else:
        click.echo(f"unlearn[{method.upper()}]: {len(manifest.artifacts)} artifacts")


@main.command()
@_with_common
@click.option("--trials", type=int, default=100_000, show_default=True)
def simulate(config_path, seed, mode, out, force, trials) -> None:
    """Check the time/storage/throughput models against Monte Carlo."""
    try:
        config = _load_config(config_path, seed, mode)
        manifest = cmd_simulate(config, _out_dir(out, config), force=force, trials=trials)
    except (ConfigError, FileNotFoundError) as exc:
        _fail(2, str(exc))
    except _RUNTIME_ERRORS as exc:
        _fail(3, str(exc))
    else:
        click.echo(f"simulate: {len(manifest.artifacts)} artifacts")


@main.command()
@click.argument("manifests", nargs=-1, type=click.Path())
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--force", is_flag=True, help="Redo even if a manifest exists.")
def report(manifests, out, force) -> None:
    """Consolidate unlearn runs into CSV/JSON plus rendered figures."""
    try:
        out_dir = Path(out or os.environ.get("FUSIM_OUT") or "runs")
        manifest = cmd_report(list(manifests), out_dir, force=force)
    except (ConfigError, FileNotFoundError) as exc:
        _fail(2, str(exc))
    except _RUNTIME_ERRORS as exc:
        _fail(3, str(exc))
    else:
        click.echo(f"report: {len(manifest.artifacts)} artifacts")


if __name__ == "__main__":
    main()
