from __future__ import annotations

from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.services.intervention.config.settings import SAMPLING_MINUTES

DayType = Literal["weekday", "weekend"]


class SubModel(BaseModel):
    """One affine regime: y = a0 + sum a_i y_{k-i} + sum_j sum_i b[j][i] u^j_{k-i} + w."""

    model_config = ConfigDict(frozen=True)

    a0: float
    a: List[float]
    # b[j][i]: channel j (message type j+1), lag i = 0..n
    b: List[List[float]]


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    mu_w: float = Field(..., alias="mu")
    sigma_w: float = Field(..., alias="sigma")
    # Optional per-step standard deviations over the window (index 0 = window step 1)
    sigma_schedule: Optional[List[float]] = None


class PwaModel(BaseModel):
    """Switched affine autoregressive step-count model.

    Construction only checks types; dimensional and sign invariants are
    reported by ``validate_model`` so that broken files can be diagnosed.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    order: int
    channels: int
    sampling_minutes: int = SAMPLING_MINUTES
    submodels: List[SubModel]
    switch_rule: Dict[DayType, int]
    noise: NoiseModel


class History(BaseModel):
    """Lag window seen by the model at step k (most recent first)."""

    model_config = ConfigDict(frozen=True)

    y_past: Tuple[float, ...]
    # u_past[j][i-1] = u^{j+1}_{k-i}
    u_past: Tuple[Tuple[int, ...], ...]

    @classmethod
    def zeros(cls, order: int, channels: int) -> "History":
        return cls(y_past=(0.0,) * order, u_past=((0,) * order,) * channels)

    @classmethod
    def from_realized(
        cls,
        outputs: Sequence[float],
        decisions: Sequence[int],
        order: int,
        channels: int,
    ) -> "History":
        """Build the lag window from realized outputs and decision codes.

        ``decisions`` holds 0 for "no message" and j for message type j.
        Missing lags at the start of the record are zero-padded.
        """
        ys = [float(v) for v in reversed(list(outputs)[-order:])] if order else []
        ys += [0.0] * (order - len(ys))

        recent = list(reversed(list(decisions)[-order:])) if order else []
        recent += [0] * (order - len(recent))
        us = tuple(tuple(1 if d == j + 1 else 0 for d in recent) for j in range(channels))
        return cls(y_past=tuple(ys), u_past=us)
