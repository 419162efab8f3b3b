from __future__ import annotations

import math
from typing import List, Sequence

import numpy as np

from app.errors import InfeasiblePastError
from app.services.intervention.config.settings import (
    BETA_FRACTION,
    BUDGET_TOL,
    C_TIME_END,
    C_TIME_START,
)
from app.services.intervention.schemas.intervention_schemas import (
    BurdenConstraints,
    CostProfile,
    RemainingBudget,
    Violation,
)


def decisions_to_schedule(decisions: Sequence[int], channels: int) -> np.ndarray:
    """Decision codes (0 = none, j = type j) -> (L, m) binary matrix."""
    u = np.zeros((len(decisions), channels), dtype=int)
    for row, d in enumerate(decisions):
        if not 0 <= d <= channels:
            raise ValueError(f"decision code {d} outside 0..{channels}")
        if d:
            u[row, d - 1] = 1
    return u


def schedule_to_decisions(schedule) -> List[int]:
    u = np.asarray(schedule)
    out = []
    for row in u:
        sent = np.flatnonzero(row)
        if len(sent) > 1:
            raise ValueError("a step may carry at most one message")
        out.append(int(sent[0]) + 1 if len(sent) else 0)
    return out


def build_cost_profile(
    hourly_step_averages: Sequence[float],
    window: int,
    steps_per_hour: int,
    c_time_start: float = C_TIME_START,
    c_time_end: float = C_TIME_END,
) -> CostProfile:
    hourly = np.asarray(hourly_step_averages, dtype=float)
    if steps_per_hour < 1 or window < 1:
        raise ValueError("window and steps_per_hour must be positive")
    if math.ceil(window / steps_per_hour) != hourly.shape[0]:
        raise ValueError(
            f"{hourly.shape[0]} hourly averages do not cover a {window}-step window "
            f"at {steps_per_hour} steps per hour"
        )
    if np.any(hourly < 0) or not np.all(np.isfinite(hourly)):
        raise ValueError("hourly averages must be finite and nonnegative")
    if not 0 < c_time_end <= c_time_start <= 1:
        raise ValueError("c_time ramp must satisfy 0 < end <= start <= 1")

    per_step = np.repeat(hourly, steps_per_hour)[:window]
    peak = per_step.max()
    # no recorded activity -> all-zero step costs, budget inert
    c_step = per_step / peak if peak > 0 else np.zeros(window)
    c_time = np.linspace(c_time_start, c_time_end, window)
    c = c_time * c_step
    return CostProfile(c_time=c_time.tolist(), c_step=c_step.tolist(), c=c.tolist())


def default_beta(alpha: int, costs: CostProfile) -> float:
    return BETA_FRACTION * alpha * max(costs.c, default=0.0)


def _as_rows(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim == 2:
        return arr
    if arr.size == 0:
        return np.zeros((0, 0), dtype=int)
    raise ValueError(f"schedules must be 2-D (steps x channels), got shape {arr.shape}")


def _window_matrix(schedule, past, cons: BurdenConstraints, costs: CostProfile) -> np.ndarray:
    future, before = _as_rows(schedule), _as_rows(past)
    m = max(future.shape[1], before.shape[1])
    if future.shape[0] == 0:
        future = np.zeros((0, m), dtype=int)
    if before.shape[0] == 0:
        before = np.zeros((0, m), dtype=int)
    if future.shape[1] != before.shape[1]:
        raise ValueError("past and schedule have different channel counts")
    full = np.vstack([before, future])
    if full.shape[0] != cons.window_len:
        raise ValueError(
            f"past ({before.shape[0]}) and schedule ({future.shape[0]}) do not partition "
            f"a window of {cons.window_len} steps"
        )
    if len(costs.c) != cons.window_len:
        raise ValueError(f"cost profile has {len(costs.c)} steps, window has {cons.window_len}")
    return full


def is_feasible(schedule, past, cons: BurdenConstraints, costs: CostProfile) -> List[Violation]:
    """Check the whole window (realized past + planned future) against the burden rules.

    Steps in the returned violations are 1-based window steps.
    """
    u = _window_matrix(schedule, past, cons, costs)
    violations: List[Violation] = []

    bad = np.argwhere((u != 0) & (u != 1))
    for k, j in bad:
        violations.append(Violation(rule="binary", step=int(k) + 1, detail=f"u[{j + 1}] = {u[k, j]}"))
    if violations:
        return violations

    per_step = u.sum(axis=1)
    s = cons.spacing_steps
    for k in range(per_step.shape[0]):
        run = int(per_step[max(0, k - s + 1): k + 1].sum())
        if run > 1:
            violations.append(
                Violation(rule="spacing", step=k + 1, detail=f"{run} messages within {s} steps")
            )

    sent = np.cumsum(per_step)
    over = np.flatnonzero(sent > cons.alpha)
    if over.size:
        violations.append(
            Violation(rule="count", step=int(over[0]) + 1, detail=f"{int(sent[-1])} messages > alpha {cons.alpha}")
        )

    spent = np.cumsum(np.asarray(costs.c) * per_step)
    over = np.flatnonzero(spent > cons.beta + BUDGET_TOL)
    if over.size:
        violations.append(
            Violation(rule="budget", step=int(over[0]) + 1, detail=f"cost {spent[-1]:.6g} > beta {cons.beta:.6g}")
        )
    return violations


def remaining_budget(past, cons: BurdenConstraints, costs: CostProfile) -> RemainingBudget:
    before = _as_rows(past)
    m = before.shape[1]
    k_star = before.shape[0] + 1

    problems = is_feasible(np.zeros((cons.window_len - before.shape[0], m), dtype=int), before, cons, costs)
    if problems:
        raise InfeasiblePastError(
            "realized inputs violate the burden constraints: "
            + "; ".join(f"{v.rule} at step {v.step}" for v in problems)
        )

    per_step = before.sum(axis=1)
    spent = float(np.sum(np.asarray(costs.c[: before.shape[0]]) * per_step))
    sent_steps = np.flatnonzero(per_step)
    blocked_until = k_star
    if sent_steps.size:
        blocked_until = max(k_star, int(sent_steps[-1]) + 1 + cons.spacing_steps)
    return RemainingBudget(
        messages_left=cons.alpha - int(per_step.sum()),
        cost_left=cons.beta - spent,
        blocked_until=blocked_until,
    )
