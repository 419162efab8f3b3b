"""Scenario sampling and the affine reduction of the goal test.

Because every sub-model is affine, the window step-count sum under scenario s
splits into a scenario-specific base (history, intercept and noise) plus a
schedule term that does not depend on s. The goal test of each scenario is
therefore a single linear inequality in the schedule.
"""
from __future__ import annotations

import logging
from typing import Sequence, Union

import numpy as np
from scipy.stats import norm

from app.services.activity.activity_engine import cumulative_responses, simulate_trajectory
from app.services.activity.schemas import History, NoiseModel, PwaModel
from app.services.intervention.config.settings import ANALYTIC_FALLBACK_SCENARIOS
from app.services.intervention.schemas.intervention_schemas import ReducedProblem
from app.services.intervention.utils.constraints import schedule_to_decisions

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator; Gaussian draws use numpy's ziggurat sampler."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def sample_noise(
    noise: NoiseModel,
    horizon: int,
    count: int,
    seed: SeedLike,
    start_step: int = 1,
) -> np.ndarray:
    """Draw ``count`` i.i.d. Gaussian noise trajectories; row s is trajectory s.

    ``start_step`` (1-based window step of the first column) selects the slice of
    a per-step ``sigma_schedule`` when the model carries one.
    """
    if count < 1:
        raise ValueError(f"scenario count must be >= 1, got {count}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")

    scale: Union[float, np.ndarray] = noise.sigma_w
    if noise.sigma_schedule is not None:
        lo = start_step - 1
        sched = np.asarray(noise.sigma_schedule[lo: lo + horizon], dtype=float)
        if sched.shape[0] != horizon:
            raise ValueError(
                f"sigma_schedule has {len(noise.sigma_schedule)} entries, "
                f"steps {start_step}..{start_step + horizon - 1} requested"
            )
        scale = sched
    rng = make_rng(seed)
    return rng.normal(loc=noise.mu_w, scale=scale, size=(count, horizon))


def _counted_tail(cum: np.ndarray, skip: int) -> np.ndarray:
    """Per-position tail sums of a cumulative response, ignoring the first ``skip`` outputs.

    Row p is the total effect of an impulse at position p on outputs
    max(p, skip)..end of the horizon.
    """
    length = cum.shape[0]
    skip = min(max(skip, 0), length)
    tail = np.array(cum[::-1])
    for p in range(skip):
        tail[p] = tail[p] - cum[skip - 1 - p]
    return tail


def compute_gains(model: PwaModel, regime: int, k_star: int, T: int, objective_start_step: int = 1) -> np.ndarray:
    """gains[p, j]: effect of message type j+1 at step k* + p on the objective sum.

    The objective sums y from max(k*, objective_start_step) to T.
    """
    length = T - k_star + 1
    if length < 0:
        raise ValueError(f"k* ({k_star}) must not exceed T + 1 ({T + 1})")
    _, input_cum = cumulative_responses(model.submodels[regime], length)
    return _counted_tail(input_cum, objective_start_step - k_star)


def noise_weights(model: PwaModel, regime: int, horizon: int, skip: int = 0) -> np.ndarray:
    """Weight with which w at each remaining position enters the objective sum."""
    noise_cum, _ = cumulative_responses(model.submodels[regime], horizon)
    return _counted_tail(noise_cum, skip)


def schedule_gain(gains: np.ndarray, decisions: Sequence[int]) -> float:
    """Sum of gains over the sent messages, accumulated in step order."""
    total = 0.0
    for p, d in enumerate(decisions):
        if d:
            total = total + float(gains[p, d - 1])
    return total


def satisfied_count(reduced: ReducedProblem, gain: float) -> int:
    return int(np.count_nonzero(reduced.theta <= gain))


def saa_probability(reduced: ReducedProblem, decisions: Sequence[int]) -> float:
    return satisfied_count(reduced, schedule_gain(reduced.gains, decisions)) / reduced.n_scenarios


def _zero_input_sum(model: PwaModel, regime: int, hist: History, horizon: int, skip: int = 0) -> float:
    m = model.channels
    y = simulate_trajectory(model, regime, hist, np.zeros((horizon, m), dtype=int), np.zeros(horizon))
    return float(y[max(skip, 0):].sum())


def reduce(
    model: PwaModel,
    regime: int,
    hist: History,
    past_outputs_sum: float,
    noise: np.ndarray,
    goal: float,
    k_star: int,
    T: int,
    objective_start_step: int = 1,
) -> ReducedProblem:
    """Turn N sampled noise trajectories into per-scenario thresholds.

    Past inputs enter through ``hist.u_past``; realized outputs before k* enter
    through ``hist.y_past`` and ``past_outputs_sum``. Predicted outputs before
    ``objective_start_step`` shape the dynamics but are left out of the sum.
    """
    horizon = T - k_star + 1
    w = np.asarray(noise, dtype=float)
    if w.ndim != 2 or w.shape[0] < 1:
        raise ValueError("noise set must be a nonempty (N, horizon) array")
    if w.shape[1] != horizon:
        raise ValueError(f"noise trajectories cover {w.shape[1]} steps, horizon is {horizon}")

    skip = objective_start_step - k_star
    gains = compute_gains(model, regime, k_star, T, objective_start_step)
    deterministic = _zero_input_sum(model, regime, hist, horizon, skip)
    base = deterministic + w @ noise_weights(model, regime, horizon, skip)
    theta = goal - past_outputs_sum - base
    return ReducedProblem(gains=gains, theta=theta, k_star=k_star, T=T, base=base)


def analytic_probability(
    model: PwaModel,
    regime: int,
    hist: History,
    past_outputs_sum: float,
    schedule,
    goal: float,
    start_step: int = 1,
    fallback_seed: SeedLike = 0,
    fallback_scenarios: int = ANALYTIC_FALLBACK_SCENARIOS,
) -> float:
    """Exact probability that the window sum reaches ``goal`` under ``schedule``.

    Gaussian noise enters the sum linearly, so the sum is Gaussian with the mean
    of the noise-mean simulation and variance sigma_w^2 * sum(weights^2). A model
    with a per-step sigma schedule is estimated by Monte Carlo instead.
    """
    u = np.asarray(schedule, dtype=int).reshape(-1, model.channels)
    horizon = u.shape[0]
    noise = model.noise

    if noise.sigma_schedule is not None:
        logger.warning("Per-step sigma schedule present; estimating probability by Monte Carlo")
        draws = sample_noise(noise, horizon, fallback_scenarios, fallback_seed, start_step=start_step)
        reduced = reduce(model, regime, hist, past_outputs_sum, draws, goal, start_step, start_step + horizon - 1)
        return saa_probability(reduced, schedule_to_decisions(u))

    mean = past_outputs_sum + float(
        simulate_trajectory(model, regime, hist, u, np.full(horizon, noise.mu_w)).sum()
    )
    spread = noise.sigma_w * float(np.sqrt(np.sum(noise_weights(model, regime, horizon) ** 2)))
    if spread == 0.0:
        return 1.0 if mean >= goal else 0.0
    return float(norm.cdf((mean - goal) / spread))

