import numpy as np
import pytest

from app.config import SHIPPED_MODEL_PATH
from app.services.activity.activity_engine import load_model
from app.services.activity.schemas import NoiseModel, PwaModel, SubModel
from app.services.intervention.schemas.intervention_schemas import (
    BurdenConstraints,
    CostProfile,
    MpcConfig,
    ReducedProblem,
)
from app.services.intervention.utils.constraints import build_cost_profile

# weekday coefficients, typed in independently of the shipped JSON
A0 = 80.51
A = [-0.0052, 0.0043, 0.0421, -0.0674, 0.4607]
B = [
    [-20.418, 33.621, -9.370, 9.534, 9.417, 4.002],
    [2.383, -4.976, 5.695, 25.936, -1.737, 19.616],
    [-14.345, 14.103, 25.980, 32.900, -17.978, -61.739],
]


@pytest.fixture(scope="session")
def reference_model() -> PwaModel:
    return load_model(SHIPPED_MODEL_PATH)


def make_model(sigma: float = 268.679, mu: float = -0.0155, a0: float = A0) -> PwaModel:
    return PwaModel(
        order=5,
        channels=3,
        submodels=[SubModel(a0=a0, a=A, b=B)],
        switch_rule={"weekday": 0, "weekend": 0},
        noise=NoiseModel(mu=mu, sigma=sigma),
    )


def flat_costs(window: int, value: float = 0.5) -> CostProfile:
    return CostProfile(c_time=[1.0] * window, c_step=[value] * window, c=[value] * window)


def make_config(model: PwaModel, window: int = 40, goal: float = 6016.0, **kwargs) -> MpcConfig:
    steps_per_hour = 60 // model.sampling_minutes
    hours = -(-window // steps_per_hour)
    costs = kwargs.pop("costs", None) or build_cost_profile([150.0] * hours, window, steps_per_hour)
    alpha = kwargs.pop("alpha", min(6, window))
    beta = kwargs.pop("beta", 100.0)
    spacing = kwargs.pop("spacing_steps", 2)
    cons = BurdenConstraints(alpha=alpha, beta=beta, spacing_steps=spacing, window_len=window)
    return MpcConfig(model=model, constraints=cons, costs=costs, goal=goal, **kwargs)


def random_reduced(rng: np.random.Generator, horizon: int, channels: int, n: int, k_star: int = 1) -> ReducedProblem:
    gains = np.round(rng.normal(0.0, 10.0, size=(horizon, channels)), 3)
    theta = np.round(rng.normal(5.0, 15.0, size=n), 3)
    return ReducedProblem(gains=gains, theta=theta, k_star=k_star, T=k_star + horizon - 1, base=np.zeros(n))
