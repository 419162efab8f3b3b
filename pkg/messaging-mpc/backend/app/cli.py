"""Command-line entry point: ``python -m app.cli run|validate|goal|sweep``."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from app.config import configure_logging
from app.errors import ModelValidationError
from app.services.activity.activity_engine import load_model
from app.services.experiment.runner import (
    exit_code_for,
    load_run_config,
    read_history,
    run_experiment,
    sweep,
    write_sweep,
)
from app.services.experiment.schemas import ExperimentConfig, RunConfigFile, experiment_from_file
from app.services.intervention.config.settings import GOAL_INCREMENT, PRESET_MULTIPLIERS
from app.services.intervention.engine.mpc_engine import compute_goal

logger = logging.getLogger(__name__)

PRESETS = click.Choice(sorted(PRESET_MULTIPLIERS))


def _fail(exc: BaseException) -> None:
    code = exit_code_for(exc)
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, ModelValidationError):
        for problem in exc.violations:
            click.echo(f"  - {problem}", err=True)
    if code == 4:
        logger.debug("Run failed", exc_info=exc)
    sys.exit(code)


def _experiment(config_path: Optional[Path], **overrides) -> ExperimentConfig:
    run_file = load_run_config(config_path) if config_path else RunConfigFile()
    return experiment_from_file(run_file).with_updates(**overrides)


@click.group()
@click.option("--log-level", default=None, help="Logging level (default from MPC_LOG_LEVEL).")
def cli(log_level: Optional[str]) -> None:
    """Stochastic shrinking-horizon message scheduling."""
    configure_logging(log_level)


@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="JSON run config.")
@click.option("--scenario", type=PRESETS, default=None, help="Activity preset.")
@click.option("--seed", type=int, default=None)
@click.option("--n-scenarios", type=int, default=None, help="Noise scenarios per solve.")
@click.option("--alpha", type=int, default=None, help="Maximum messages per window.")
@click.option("--beta", type=float, default=None, help="Message cost budget.")
@click.option("--goal", type=float, default=None, help="Window step goal.")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Output directory.")
@click.option("--dump-scenarios", is_flag=True, default=False, help="Also write per-step thresholds.")
def run(config_path, scenario, seed, n_scenarios, alpha, beta, goal, out, dump_scenarios) -> None:
    """Run one intervention window and write its artifacts."""
    try:
        exp = _experiment(
            config_path,
            preset=scenario,
            seed=seed,
            n_scenarios=n_scenarios,
            alpha=alpha,
            beta=beta,
            goal=goal,
            out_dir=out,
            dump_scenarios=dump_scenarios or None,
        )
        outcome = run_experiment(exp)
    except Exception as exc:
        _fail(exc)
        return
    log = outcome.log
    click.echo(
        f"{exp.preset}: {log.messages_sent} messages, total steps {log.total_steps:.0f} "
        f"(goal {log.goal:.0f}), final probability {log.final_probability}"
    )


@cli.command()
@click.option("--model", "model_path", type=click.Path(path_type=Path), required=True)
def validate(model_path: Path) -> None:
    """Check a model file against the model invariants."""
    try:
        model = load_model(model_path)
    except Exception as exc:
        _fail(exc)
        return
    click.echo(f"ok: order {model.order}, {model.channels} message types, {len(model.submodels)} sub-model(s)")


@cli.command()
@click.option("--history", "history_path", type=click.Path(path_type=Path), required=True)
@click.option("--increment", type=float, default=GOAL_INCREMENT, show_default=True)
def goal(history_path: Path, increment: float) -> None:
    """Daily goal from a CSV of past window totals."""
    try:
        value = compute_goal(read_history(history_path), increment)
    except Exception as exc:
        _fail(exc)
        return
    click.echo(f"{value:g}")


@cli.command("sweep")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--presets", default="regular,low,high", show_default=True)
@click.option("--seeds", type=int, default=20, show_default=True, help="Seeds 1..N.")
@click.option("--n-scenarios", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def sweep_command(config_path, presets, seeds, n_scenarios, out) -> None:
    """Run presets x seeds and tabulate messages and probabilities."""
    try:
        names = [p.strip() for p in presets.split(",") if p.strip()]
        unknown = sorted(set(names) - set(PRESET_MULTIPLIERS))
        if unknown:
            raise click.BadParameter(f"unknown presets {unknown}", param_hint="--presets")
        exp = _experiment(config_path, n_scenarios=n_scenarios, out_dir=out)
        frame = sweep(exp, names, range(1, seeds + 1))
        path = write_sweep(frame, exp.out_dir)
    except click.BadParameter:
        raise
    except Exception as exc:
        _fail(exc)
        return
    summary = frame.groupby("preset")["messages"].median().to_dict()
    click.echo(f"wrote {path}; median messages {json.dumps(summary, sort_keys=True)}")


if __name__ == "__main__":
    cli()
