from __future__ import annotations

import numpy as np

from app.services.intervention.utils.scenario import SeedLike, make_rng

# spawn key of the measurement stream; MPC steps use keys 1..T
MEASUREMENT_STREAM = 0


def measurement_rng(seed: int) -> np.random.Generator:
    return make_rng(np.random.SeedSequence(seed, spawn_key=(MEASUREMENT_STREAM,)))


def generate_measurements(
    mu: float,
    sigma: float,
    multiplier: float,
    steps: int,
    rng: SeedLike,
) -> np.ndarray:
    """Synthetic per-step step counts: Gaussian(multiplier * mu, sigma), floored at 0."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    draws = make_rng(rng).normal(loc=multiplier * mu, scale=sigma, size=steps)
    return np.maximum(draws, 0.0)
