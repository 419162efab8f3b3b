from __future__ import annotations

import datetime as _dt
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.errors import ConfigError
from app.services.activity.schemas import SubModel
from app.services.intervention.config.settings import (
    C_TIME_END,
    C_TIME_START,
    DEFAULT_HOURLY_AVERAGES,
    MAX_MESSAGES,
    MU_WINDOW,
    PRESET_MULTIPLIERS,
    SIGMA_WINDOW,
    SPACING_STEPS,
    WINDOW_END,
    WINDOW_START,
)
from app.services.intervention.schemas.intervention_schemas import SolverName

Preset = Literal["regular", "low", "high", "custom"]


# -----------------------
# RUN CONFIG FILE BLOCKS
# -----------------------
class ModelBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    # extra sub-model for weekend days; switch_rule.weekend is pointed at it
    weekend: Optional[SubModel] = None


class ConstraintsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: int = Field(default=MAX_MESSAGES, ge=0)
    beta: Optional[float] = Field(default=None, ge=0)
    spacing_steps: int = Field(default=SPACING_STEPS, ge=1)


class CostsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hourly_step_averages: List[float] = Field(default_factory=lambda: list(DEFAULT_HOURLY_AVERAGES))
    c_time_start: float = C_TIME_START
    c_time_end: float = C_TIME_END


class MpcBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_scenarios: int = Field(default=settings.N_SCENARIOS, ge=1)
    seed: int = settings.SEED
    solver: SolverName = settings.SOLVER  # type: ignore[assignment]
    goal: Optional[float] = None
    history: Optional[str] = None
    window_start: str = WINDOW_START
    window_end: str = WINDOW_END
    decide_at_terminal: bool = True
    objective_start_step: int = Field(default=1, ge=1)


class ExperimentBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Preset = "regular"
    multiplier: Optional[float] = Field(default=None, gt=0)
    mu_window: float = MU_WINDOW
    sigma_window: float = Field(default=SIGMA_WINDOW, ge=0)
    day: Optional[_dt.date] = None
    out: str = settings.OUTPUT_DIR
    dump_scenarios: bool = False


class RunConfigFile(BaseModel):
    """JSON run configuration: {model, constraints, costs, mpc, experiment}."""

    model_config = ConfigDict(extra="forbid")

    model: ModelBlock = Field(default_factory=ModelBlock)
    constraints: ConstraintsBlock = Field(default_factory=ConstraintsBlock)
    costs: CostsBlock = Field(default_factory=CostsBlock)
    mpc: MpcBlock = Field(default_factory=MpcBlock)
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)


# -----------------------
# RESOLVED EXPERIMENT
# -----------------------
class ExperimentConfig(BaseModel):
    """Flat, fully resolved description of one reproduction run."""

    model_config = ConfigDict(frozen=True)

    preset: Preset = "regular"
    multiplier: float = Field(default=1.0, gt=0)
    mu_window: float = MU_WINDOW
    sigma_window: float = Field(default=SIGMA_WINDOW, ge=0)

    model_path: Path = Path(settings.MODEL_PATH)
    weekend_submodel: Optional[SubModel] = None
    day: Optional[_dt.date] = None

    goal: Optional[float] = None
    history_path: Optional[Path] = None

    alpha: int = Field(default=MAX_MESSAGES, ge=0)
    beta: Optional[float] = Field(default=None, ge=0)
    spacing_steps: int = Field(default=SPACING_STEPS, ge=1)
    hourly_step_averages: List[float] = Field(default_factory=lambda: list(DEFAULT_HOURLY_AVERAGES))
    c_time_start: float = C_TIME_START
    c_time_end: float = C_TIME_END

    window_start: str = WINDOW_START
    window_end: str = WINDOW_END
    n_scenarios: int = Field(default=settings.N_SCENARIOS, ge=1)
    seed: int = settings.SEED
    solver: SolverName = "fast"
    decide_at_terminal: bool = True
    objective_start_step: int = Field(default=1, ge=1)

    out_dir: Path = Path(settings.OUTPUT_DIR)
    dump_scenarios: bool = False

    @model_validator(mode="after")
    def preset_multiplier(self):
        expected = PRESET_MULTIPLIERS.get(self.preset)
        if expected is not None and self.multiplier != expected:
            raise ValueError(f"preset '{self.preset}' uses multiplier {expected}, got {self.multiplier}")
        return self

    def with_updates(self, **updates) -> "ExperimentConfig":
        """Copy with overrides, re-validated (``model_copy`` skips validation)."""
        data = self.model_dump()
        data.update({k: v for k, v in updates.items() if v is not None})
        if "preset" in updates and updates["preset"] in PRESET_MULTIPLIERS and "multiplier" not in updates:
            data["multiplier"] = PRESET_MULTIPLIERS[updates["preset"]]
        return ExperimentConfig.model_validate(data)


def experiment_from_file(run_file: RunConfigFile) -> ExperimentConfig:
    exp = run_file.experiment
    if exp.preset == "custom":
        if exp.multiplier is None:
            raise ConfigError("preset 'custom' needs an explicit multiplier")
        multiplier = exp.multiplier
    else:
        multiplier = PRESET_MULTIPLIERS[exp.preset]
    return ExperimentConfig(
        preset=exp.preset,
        multiplier=multiplier,
        mu_window=exp.mu_window,
        sigma_window=exp.sigma_window,
        model_path=Path(run_file.model.path or settings.MODEL_PATH),
        weekend_submodel=run_file.model.weekend,
        day=exp.day,
        goal=run_file.mpc.goal,
        history_path=Path(run_file.mpc.history) if run_file.mpc.history else None,
        alpha=run_file.constraints.alpha,
        beta=run_file.constraints.beta,
        spacing_steps=run_file.constraints.spacing_steps,
        hourly_step_averages=run_file.costs.hourly_step_averages,
        c_time_start=run_file.costs.c_time_start,
        c_time_end=run_file.costs.c_time_end,
        window_start=run_file.mpc.window_start,
        window_end=run_file.mpc.window_end,
        n_scenarios=run_file.mpc.n_scenarios,
        seed=run_file.mpc.seed,
        solver=run_file.mpc.solver,
        decide_at_terminal=run_file.mpc.decide_at_terminal,
        objective_start_step=run_file.mpc.objective_start_step,
        out_dir=Path(exp.out),
        dump_scenarios=exp.dump_scenarios,
    )
