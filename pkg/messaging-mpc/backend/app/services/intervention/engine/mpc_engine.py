from __future__ import annotations

import datetime
import logging
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from app.services.activity.activity_engine import active_submodel, simulate_trajectory
from app.services.activity.schemas import History
from app.services.intervention.config.settings import GOAL_INCREMENT
from app.services.intervention.engine.solver import formulate_big_m, solve
from app.services.intervention.schemas.intervention_schemas import (
    MpcConfig,
    MpcState,
    RemainingBudget,
    RunLog,
    RunLogEntry,
    StepResult,
)
from app.services.intervention.utils.constraints import decisions_to_schedule, remaining_budget
from app.services.intervention.utils.scenario import make_rng, reduce, sample_noise, satisfied_count

logger = logging.getLogger(__name__)


def compute_goal(daily_window_totals: Sequence[float], increment: float = GOAL_INCREMENT) -> float:
    """Mean of past daily window totals plus a fixed increment."""
    totals = [float(v) for v in daily_window_totals]
    if not totals:
        raise ValueError("at least one daily window total is required")
    return float(np.mean(totals)) + float(increment)


def resolve_regime(config: MpcConfig) -> int:
    if config.regime is not None:
        return config.regime
    if config.day is not None:
        return active_submodel(config.model, config.day)
    return config.model.switch_rule["weekday"]


def window_length(window_start: str, window_end: str, sampling_minutes: int) -> int:
    """Number of sampling steps between two HH:MM clock times."""
    start = datetime.datetime.strptime(window_start, "%H:%M")
    end = datetime.datetime.strptime(window_end, "%H:%M")
    minutes = (end - start).total_seconds() / 60
    if minutes < 0:
        raise ValueError(f"window end {window_end} precedes start {window_start}")
    if minutes % sampling_minutes:
        raise ValueError(f"window {window_start}-{window_end} is not a whole number of {sampling_minutes}-minute steps")
    return int(minutes // sampling_minutes)


def clock_time(config: MpcConfig, step: int) -> str:
    start = datetime.datetime.strptime(config.window_start, "%H:%M")
    slot = start + datetime.timedelta(minutes=(step - 1) * config.model.sampling_minutes)
    return slot.strftime("%H:%M")


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Generator for one MPC step, derived from (master seed, step)."""
    return make_rng(np.random.SeedSequence(seed, spawn_key=(step,)))


def initial_state(
    config: MpcConfig,
    outputs: Sequence[float] = (),
    decisions: Sequence[int] = (),
) -> MpcState:
    """State at the configured start step; a mid-window start needs the realized prefix."""
    return MpcState(
        k_star=config.start_step,
        outputs=tuple(float(v) for v in outputs),
        decisions=tuple(int(d) for d in decisions),
        regime=resolve_regime(config),
    )


def _fill_missing(config: MpcConfig, state: MpcState) -> float:
    # y_{k*-1} was never reported: use its noise-mean prediction
    model = config.model
    k_prev = state.k_star - 1
    hist = History.from_realized(state.outputs, state.decisions[: k_prev - 1], model.order, model.channels)
    u = decisions_to_schedule([state.decisions[k_prev - 1]], model.channels)
    predicted = float(simulate_trajectory(model, state.regime, hist, u, [model.noise.mu_w])[0])
    logger.warning("No measurement for step %d; using model prediction %.1f", k_prev, predicted)
    return predicted


def mpc_step(
    config: MpcConfig,
    state: MpcState,
    measurement: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> StepResult:
    """One shrinking-horizon iteration: ingest y_{k*-1}, re-plan k*..T, apply the first input."""
    model, cons = config.model, config.constraints
    k, T = state.k_star, config.T
    if k > T:
        raise ValueError(f"window already finished (k* = {k}, T = {T})")
    if not 0 <= state.regime < len(model.submodels):
        raise ValueError(f"regime {state.regime} is not a sub-model index")

    outputs = list(state.outputs)
    if state.pending_measurement:
        outputs.append(_fill_missing(config, state) if measurement is None else float(measurement))
    elif measurement is not None:
        raise ValueError(f"no measurement is pending at step {k}")

    past = decisions_to_schedule(state.decisions, model.channels)
    budget = remaining_budget(past, cons, config.costs)
    if k == T and not config.decide_at_terminal:
        budget = RemainingBudget(messages_left=0, cost_left=budget.cost_left, blocked_until=budget.blocked_until)

    hist = History.from_realized(outputs, state.decisions, model.order, model.channels)
    past_sum = float(sum(outputs[config.objective_start_step - 1:]))
    horizon = T - k + 1
    generator = rng if rng is not None else step_rng(config.seed, k)

    noise = sample_noise(model.noise, horizon, config.n_scenarios, generator, start_step=k)
    reduced = reduce(model, state.regime, hist, past_sum, noise, config.goal, k, T, config.objective_start_step)
    problem = formulate_big_m(reduced, cons, config.costs, budget)
    solution = solve(problem, config.solver)

    decision = solution.decisions[0]
    new_state = MpcState(
        k_star=k + 1,
        outputs=tuple(outputs),
        decisions=state.decisions + (decision,),
        regime=state.regime,
    )
    logger.info(
        "step %d (%s): message=%d p=%.3f planned=%s nodes=%d",
        k, clock_time(config, k), decision, solution.objective, list(solution.decisions), solution.node_count,
    )
    return StepResult(
        step=k,
        decision=decision,
        probability=solution.objective,
        baseline_probability=satisfied_count(reduced, 0.0) / reduced.n_scenarios,
        planned_tail=list(solution.decisions),
        thresholds=reduced.theta.tolist(),
        solution=solution,
        state=new_state,
    )


def run_window(
    config: MpcConfig,
    measurements: Iterable[float],
    rng: Optional[np.random.Generator] = None,
    state: Optional[MpcState] = None,
    on_step: Optional[Callable[[StepResult], None]] = None,
) -> RunLog:
    """Run shrinking-horizon control from the start step to the window end T.

    ``measurements`` yields y_k for each step k of the run, in order.
    """
    if state is None:
        state = initial_state(config)
    source = iter(measurements)
    costs = config.costs.c
    log = RunLog(goal=config.goal)
    messages_used = sum(1 for d in state.decisions if d)
    cost_used = 0.0
    for step, d in enumerate(state.decisions, start=1):
        if d:
            cost_used = cost_used + costs[step - 1]

    logger.info("Run start: steps %d..%d, goal %.0f, N=%d", state.k_star, config.T, config.goal, config.n_scenarios)
    previous: Optional[float] = None
    for k in range(state.k_star, config.T + 1):
        result = mpc_step(config, state, previous, rng)
        try:
            y = float(next(source))
        except StopIteration:
            raise ValueError(f"measurement source ended before step {k}") from None
        state = result.state
        if result.decision:
            messages_used += 1
            cost_used = cost_used + costs[k - 1]
        log.entries.append(
            RunLogEntry(
                step=k,
                clock_time=clock_time(config, k),
                measured_steps=y,
                message_type=result.decision,
                prob_estimate=result.probability,
                baseline_prob=result.baseline_probability,
                messages_used=messages_used,
                cost_used=cost_used,
                nodes=result.solution.node_count,
                planned_tail=result.planned_tail,
            )
        )
        if on_step is not None:
            on_step(result)
        previous = y

    realized = list(state.outputs) + ([previous] if previous is not None else [])
    log.total_steps = float(sum(realized[config.objective_start_step - 1:]))
    log.total_cost = cost_used
    log.messages_by_type = {
        j: sum(1 for d in state.decisions if d == j) for j in range(1, config.model.channels + 1)
    }
    log.final_probability = log.entries[-1].prob_estimate if log.entries else None
    log.goal_met = log.total_steps >= config.goal
    logger.info(
        "Run end: %d messages, total steps %.0f (goal %.0f, met=%s)",
        log.messages_sent, log.total_steps, config.goal, log.goal_met,
    )
    return log
