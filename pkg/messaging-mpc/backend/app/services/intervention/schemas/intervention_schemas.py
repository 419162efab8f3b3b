from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.services.activity.schemas import PwaModel
from app.services.intervention.config.settings import GOAL_INCREMENT, N_SCENARIOS, WINDOW_START

SolverName = Literal["fast", "branch_and_bound", "brute_force"]
RuleName = Literal["binary", "spacing", "count", "budget"]


# -----------------------
# BURDEN CONSTRAINTS
# -----------------------
class BurdenConstraints(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: int = Field(..., ge=0)
    beta: float = Field(..., ge=0)
    spacing_steps: int = Field(default=2, ge=1)
    window_len: int = Field(..., ge=1)

    @model_validator(mode="after")
    def alpha_within_window(self):
        if self.alpha > self.window_len:
            raise ValueError(f"alpha ({self.alpha}) must be <= window_len ({self.window_len})")
        return self


class CostProfile(BaseModel):
    """Per-step composite message cost c_k = c_time_k * c_step_k."""

    model_config = ConfigDict(frozen=True)

    c_time: List[float]
    c_step: List[float]
    c: List[float]

    @model_validator(mode="after")
    def same_length(self):
        if not len(self.c_time) == len(self.c_step) == len(self.c):
            raise ValueError("c_time, c_step and c must have the same length")
        return self


class Violation(BaseModel):
    rule: RuleName
    step: int
    detail: str


class RemainingBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    messages_left: int
    cost_left: float
    blocked_until: int


# -----------------------
# NUMERIC CONTAINERS
# -----------------------
@dataclass(frozen=True)
class ReducedProblem:
    """Goal test of every scenario as ``sum(gains * u) >= theta_s``.

    gains[p, j] is the effect on the window sum of message type j+1 at step k* + p;
    it is the same for all scenarios.
    """

    gains: np.ndarray
    theta: np.ndarray
    k_star: int
    T: int
    base: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_scenarios(self) -> int:
        return int(self.theta.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.gains.shape[0])

    @property
    def channels(self) -> int:
        return int(self.gains.shape[1])


@dataclass(frozen=True)
class MilpProblem:
    reduced: ReducedProblem
    constraints: BurdenConstraints
    budget: RemainingBudget
    # composite costs of the future steps k*..T
    costs: np.ndarray
    big_m: np.ndarray


@dataclass(frozen=True)
class Solution:
    schedule: np.ndarray
    decisions: Tuple[int, ...]
    satisfied_count: int
    scenario_count: int
    objective: float
    message_count: int
    total_cost: float
    node_count: int

    def to_dict(self) -> Dict:
        return {
            "decisions": list(self.decisions),
            "satisfied_count": self.satisfied_count,
            "scenario_count": self.scenario_count,
            "objective": self.objective,
            "message_count": self.message_count,
            "total_cost": self.total_cost,
            "node_count": self.node_count,
        }


# -----------------------
# MPC
# -----------------------
class MpcConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: PwaModel
    constraints: BurdenConstraints
    costs: CostProfile
    goal: float
    n_scenarios: int = Field(default=N_SCENARIOS, ge=1)
    start_step: int = Field(default=1, ge=1)
    seed: int = 1
    regime: Optional[int] = None
    day: Optional[_dt.date] = None
    solver: SolverName = "fast"
    decide_at_terminal: bool = True
    objective_start_step: int = Field(default=1, ge=1)
    window_start: str = WINDOW_START

    @property
    def T(self) -> int:
        return self.constraints.window_len

    @model_validator(mode="after")
    def consistent_window(self):
        if not np.isfinite(self.goal):
            raise ValueError("goal must be finite")
        if len(self.costs.c) != self.T:
            raise ValueError(f"cost profile covers {len(self.costs.c)} steps, window has {self.T}")
        if self.start_step > self.T + 1:
            raise ValueError(f"start_step {self.start_step} lies beyond the window end {self.T}")
        if self.regime is not None and not 0 <= self.regime < len(self.model.submodels):
            raise ValueError(f"regime {self.regime} is not a sub-model index")
        return self


class MpcState(BaseModel):
    """Realized record at the start of step k_star.

    decisions holds u_1..u_{k*-1} as codes (0 = none, j = type j). outputs holds
    y_1..y_{k*-1}, or y_1..y_{k*-2} while y_{k*-1} still awaits ingestion.
    """

    model_config = ConfigDict(frozen=True)

    k_star: int = Field(..., ge=1)
    outputs: Tuple[float, ...] = ()
    decisions: Tuple[int, ...] = ()
    regime: int = 0

    @model_validator(mode="after")
    def consistent_record(self):
        if len(self.decisions) != self.k_star - 1:
            raise ValueError(f"state at step {self.k_star} needs {self.k_star - 1} past decisions")
        if len(self.outputs) not in (self.k_star - 1, self.k_star - 2):
            raise ValueError(f"state at step {self.k_star} has {len(self.outputs)} outputs")
        return self

    @property
    def pending_measurement(self) -> bool:
        return len(self.outputs) == self.k_star - 2


class StepResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    step: int
    decision: int
    probability: float
    # estimate if no further message were sent
    baseline_probability: float
    planned_tail: List[int]
    thresholds: List[float]
    solution: Solution
    state: MpcState


class RunLogEntry(BaseModel):
    step: int
    clock_time: str
    measured_steps: float
    message_type: int
    prob_estimate: float = Field(..., ge=0.0, le=1.0)
    baseline_prob: float = Field(..., ge=0.0, le=1.0)
    messages_used: int
    cost_used: float
    nodes: int
    planned_tail: List[int]


class RunLog(BaseModel):
    goal: float
    entries: List[RunLogEntry] = Field(default_factory=list)
    total_steps: float = 0.0
    total_cost: float = 0.0
    messages_by_type: Dict[int, int] = Field(default_factory=dict)
    final_probability: Optional[float] = None
    goal_met: bool = False

    @property
    def messages_sent(self) -> int:
        return sum(self.messages_by_type.values())


# -----------------------
# HTTP
# -----------------------
class ValidateResponse(BaseModel):
    valid: bool
    violations: List[str] = Field(default_factory=list)


class GoalRequest(BaseModel):
    daily_window_totals: List[float] = Field(..., min_length=1)
    increment: float = GOAL_INCREMENT


class GoalResponse(BaseModel):
    goal: float


class StepRequest(BaseModel):
    config: MpcConfig
    # omitted -> fresh state at config.start_step
    state: Optional[MpcState] = None
    measurement: Optional[float] = None


class StepResponse(BaseModel):
    status: str = "success"
    step: int
    decision: int
    probability: float
    baseline_probability: float
    planned_tail: List[int]
    satisfied_count: int
    scenario_count: int
    node_count: int
    state: MpcState
