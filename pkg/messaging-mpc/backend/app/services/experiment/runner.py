from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.errors import ConfigError, ModelValidationError
from app.services.activity.activity_engine import load_model, validate_model
from app.services.activity.schemas import PwaModel
from app.services.experiment.measurements import generate_measurements, measurement_rng
from app.services.experiment.schemas import ExperimentConfig, RunConfigFile
from app.services.intervention.config.settings import REFERENCE_GOAL, SATURATION_LEVEL
from app.services.intervention.engine.mpc_engine import compute_goal, run_window, window_length
from app.services.intervention.schemas.intervention_schemas import (
    BurdenConstraints,
    MpcConfig,
    RunLog,
    StepResult,
)
from app.services.intervention.utils.constraints import build_cost_profile, default_beta

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6f"

RUNLOG_COLUMNS = [
    "step",
    "clock_time",
    "measured_steps",
    "message_type",
    "prob_estimate",
    "messages_used",
    "cost_used",
    "nodes",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_RUNTIME = 4


@dataclass
class RunOutcome:
    config: ExperimentConfig
    mpc_config: MpcConfig
    measurements: np.ndarray
    log: RunLog
    # theta_s of every solve, one list per step
    thresholds: List[List[float]] = field(default_factory=list)
    artifacts: Dict[str, Path] = field(default_factory=dict)


# -----------------------
# INPUTS
# -----------------------
def load_run_config(path: Union[str, Path]) -> RunConfigFile:
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {p}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not read config file {p}: {e}") from e
    try:
        return RunConfigFile.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"config file {p} is invalid: {e}") from e


def read_history(path: Union[str, Path]) -> List[float]:
    """Daily window totals, one per row; an optional header line is skipped."""
    p = Path(path)
    try:
        frame = pd.read_csv(p, header=None)
    except FileNotFoundError as e:
        raise ConfigError(f"history file not found: {p}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"could not read history file {p}: {e}") from e

    values = pd.to_numeric(frame.iloc[:, 0], errors="coerce")
    if len(values) and pd.isna(values.iloc[0]):
        values = values.iloc[1:]
    if values.isna().any():
        raise ConfigError(f"history file {p} has non-numeric rows")
    if values.empty:
        raise ConfigError(f"history file {p} holds no daily totals")
    return [float(v) for v in values]


def load_experiment_model(exp: ExperimentConfig) -> PwaModel:
    model = load_model(exp.model_path)
    if exp.weekend_submodel is not None:
        model = PwaModel.model_validate(
            {
                **model.model_dump(by_alias=True),
                "submodels": [*(s.model_dump() for s in model.submodels), exp.weekend_submodel.model_dump()],
                "switch_rule": {**model.switch_rule, "weekend": len(model.submodels)},
            }
        )
        problems = validate_model(model)
        if problems:
            raise ModelValidationError(f"weekend sub-model is invalid: {'; '.join(problems)}", problems)
    return model


def resolve_goal(exp: ExperimentConfig) -> float:
    if exp.goal is not None:
        return exp.goal
    if exp.history_path is not None:
        return compute_goal(read_history(exp.history_path))
    return REFERENCE_GOAL


def build_mpc_config(exp: ExperimentConfig, model: PwaModel) -> MpcConfig:
    try:
        T = window_length(exp.window_start, exp.window_end, model.sampling_minutes)
        if 60 % model.sampling_minutes:
            raise ValueError(f"sampling period {model.sampling_minutes} min does not divide an hour")
        costs = build_cost_profile(
            exp.hourly_step_averages,
            T,
            60 // model.sampling_minutes,
            exp.c_time_start,
            exp.c_time_end,
        )
        beta = exp.beta if exp.beta is not None else default_beta(exp.alpha, costs)
        constraints = BurdenConstraints(alpha=exp.alpha, beta=beta, spacing_steps=exp.spacing_steps, window_len=T)
        return MpcConfig(
            model=model,
            constraints=constraints,
            costs=costs,
            goal=resolve_goal(exp),
            n_scenarios=exp.n_scenarios,
            seed=exp.seed,
            day=exp.day,
            solver=exp.solver,
            decide_at_terminal=exp.decide_at_terminal,
            objective_start_step=exp.objective_start_step,
            window_start=exp.window_start,
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


# -----------------------
# RUN
# -----------------------
def simulate(exp: ExperimentConfig, model: Optional[PwaModel] = None) -> RunOutcome:
    """Run one window against synthetic measurements; writes nothing."""
    model = model if model is not None else load_experiment_model(exp)
    mpc_config = build_mpc_config(exp, model)
    measurements = generate_measurements(
        exp.mu_window, exp.sigma_window, exp.multiplier, mpc_config.T, measurement_rng(exp.seed)
    )
    thresholds: List[List[float]] = []

    def keep_thresholds(result: StepResult) -> None:
        thresholds.append(result.thresholds)

    log = run_window(mpc_config, measurements, on_step=keep_thresholds)
    return RunOutcome(config=exp, mpc_config=mpc_config, measurements=measurements, log=log, thresholds=thresholds)


def run_experiment(exp: ExperimentConfig) -> RunOutcome:
    """Validate the model, run the window and write all artifacts to ``exp.out_dir``."""
    # model problems must stop the run before any artifact exists
    model = load_experiment_model(exp)
    outcome = simulate(exp, model)
    outcome.artifacts = write_artifacts(outcome)
    logger.info("Artifacts written to %s", exp.out_dir)
    return outcome


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ModelValidationError):
        return EXIT_MODEL
    if isinstance(exc, (ConfigError, ValidationError)):
        return EXIT_CONFIG
    return EXIT_RUNTIME


# -----------------------
# ARTIFACTS
# -----------------------
def runlog_frame(log: RunLog) -> pd.DataFrame:
    rows = [entry.model_dump(include=set(RUNLOG_COLUMNS)) for entry in log.entries]
    return pd.DataFrame(rows, columns=RUNLOG_COLUMNS)


def probability_trace_frame(log: RunLog) -> pd.DataFrame:
    rows = [
        {
            "step": e.step,
            "clock_time": e.clock_time,
            "prob_estimate": e.prob_estimate,
            "baseline_prob": e.baseline_prob,
            "planned_messages": sum(1 for d in e.planned_tail if d),
        }
        for e in log.entries
    ]
    return pd.DataFrame(rows, columns=["step", "clock_time", "prob_estimate", "baseline_prob", "planned_messages"])


def scenarios_frame(thresholds: Sequence[Sequence[float]], start_step: int = 1) -> pd.DataFrame:
    rows = [
        {"step": start_step + i, "scenario": s, "theta": theta}
        for i, per_step in enumerate(thresholds)
        for s, theta in enumerate(per_step)
    ]
    return pd.DataFrame(rows, columns=["step", "scenario", "theta"])


def summary_dict(outcome: RunOutcome) -> Dict:
    log, exp = outcome.log, outcome.config
    return {
        "preset": exp.preset,
        "seed": exp.seed,
        "n_scenarios": exp.n_scenarios,
        "window_steps": outcome.mpc_config.T,
        "goal": log.goal,
        "alpha": outcome.mpc_config.constraints.alpha,
        "beta": outcome.mpc_config.constraints.beta,
        "total_steps": log.total_steps,
        "total_cost": log.total_cost,
        "messages_sent": log.messages_sent,
        "messages_by_type": {str(j): n for j, n in sorted(log.messages_by_type.items())},
        "final_probability": log.final_probability,
        "goal_met": log.goal_met,
    }


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_artifacts(outcome: RunOutcome) -> Dict[str, Path]:
    out = Path(outcome.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "runlog": _write_csv(runlog_frame(outcome.log), out / "runlog.csv"),
        "probability_trace": _write_csv(probability_trace_frame(outcome.log), out / "probability_trace.csv"),
    }
    if outcome.config.dump_scenarios:
        frame = scenarios_frame(outcome.thresholds, outcome.mpc_config.start_step)
        paths["scenarios"] = _write_csv(frame, out / "scenarios.csv")

    summary = out / "summary.json"
    summary.write_text(json.dumps(summary_dict(outcome), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["summary"] = summary

    snapshot = out / "config.json"
    snapshot.write_text(
        json.dumps(outcome.config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    paths["config"] = snapshot
    return paths


# -----------------------
# SWEEP
# -----------------------
def first_saturation_step(log: RunLog, level: float = SATURATION_LEVEL) -> Optional[int]:
    for entry in log.entries:
        if entry.prob_estimate >= level:
            return entry.step
    return None


def zero_plan_saturation_step(log: RunLog, level: float = SATURATION_LEVEL) -> Optional[int]:
    """First step whose estimate reaches ``level`` with no message planned for the rest of the window."""
    for entry in log.entries:
        if entry.prob_estimate >= level and not any(entry.planned_tail):
            return entry.step
    return None


def sweep(exp: ExperimentConfig, presets: Sequence[str], seeds: Sequence[int]) -> pd.DataFrame:
    """Run every (preset, seed) pair and tabulate the outcome of each window."""
    model = load_experiment_model(exp)
    rows = []
    for preset in presets:
        for seed in seeds:
            run_exp = exp.with_updates(preset=preset, seed=seed)
            log = simulate(run_exp, model).log
            saturated_at = first_saturation_step(log)
            settled_at = zero_plan_saturation_step(log)
            after = 0
            if settled_at is not None:
                after = sum(1 for e in log.entries if e.step > settled_at and e.message_type)
            rows.append(
                {
                    "preset": preset,
                    "seed": seed,
                    "messages": log.messages_sent,
                    "final_probability": log.final_probability,
                    "goal_met": log.goal_met,
                    "total_steps": log.total_steps,
                    "saturation_step": saturated_at,
                    "zero_plan_saturation_step": settled_at,
                    "messages_after_zero_plan_saturation": after,
                }
            )
            logger.info("Sweep %s seed %d: %d messages, p=%.2f", preset, seed, log.messages_sent, log.final_probability or 0.0)
    frame = pd.DataFrame(rows)
    if not frame.empty:
        for column in ("saturation_step", "zero_plan_saturation_step"):
            frame[column] = frame[column].astype("Int64")
    return frame


def write_sweep(frame: pd.DataFrame, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return _write_csv(frame, out / "sweep.csv")
