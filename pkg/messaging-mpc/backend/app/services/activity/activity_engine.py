from __future__ import annotations

import datetime as _dt
import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy.signal import lfilter

from app.errors import ModelValidationError

from .schemas import DayType, History, PwaModel, SubModel

logger = logging.getLogger(__name__)


# -----------------------
# VALIDATION / LOADING
# -----------------------
def _all_finite(values) -> bool:
    return all(math.isfinite(float(v)) for v in values)


def validate_model(model: PwaModel) -> List[str]:
    """Return the list of invariant violations; empty means the model is usable."""
    problems: List[str] = []
    n, m = model.order, model.channels

    if n < 1:
        problems.append(f"order must be a positive integer, got {n}")
    if m < 1:
        problems.append(f"channels must be a positive integer, got {m}")
    if model.sampling_minutes < 1:
        problems.append(f"sampling_minutes must be positive, got {model.sampling_minutes}")
    if not model.submodels:
        problems.append("at least one sub-model is required")

    for idx, sub in enumerate(model.submodels):
        if len(sub.a) != n:
            problems.append(f"submodels[{idx}].a has {len(sub.a)} entries, expected {n}")
        if len(sub.b) != m:
            problems.append(f"submodels[{idx}].b has {len(sub.b)} rows, expected {m}")
        for j, row in enumerate(sub.b):
            if len(row) != n + 1:
                problems.append(f"submodels[{idx}].b[{j}] has {len(row)} entries, expected {n + 1}")
        coeffs = [sub.a0, *sub.a, *(c for row in sub.b for c in row)]
        if not _all_finite(coeffs):
            problems.append(f"submodels[{idx}] has non-finite coefficients")

    for day_type in ("weekday", "weekend"):
        target = model.switch_rule.get(day_type)
        if target is None:
            problems.append(f"switch_rule is missing '{day_type}'")
        elif not 0 <= target < len(model.submodels):
            problems.append(f"switch_rule['{day_type}'] = {target} is not a sub-model index")

    noise = model.noise
    if not _all_finite([noise.mu_w, noise.sigma_w]):
        problems.append("noise parameters must be finite")
    elif noise.sigma_w < 0:
        problems.append(f"noise sigma must be >= 0, got {noise.sigma_w}")
    if noise.sigma_schedule is not None:
        if not _all_finite(noise.sigma_schedule) or any(s < 0 for s in noise.sigma_schedule):
            problems.append("noise sigma_schedule entries must be finite and >= 0")

    return problems


def load_model(path: Union[str, Path]) -> PwaModel:
    """Read a JSON model file; any problem surfaces as ModelValidationError."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ModelValidationError(f"model file not found: {p}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise ModelValidationError(f"could not read model file {p}: {e}") from e

    try:
        model = PwaModel.model_validate(raw)
    except ValidationError as e:
        raise ModelValidationError(f"model file {p} does not match the model schema: {e}") from e

    problems = validate_model(model)
    if problems:
        raise ModelValidationError(f"model file {p} is invalid: {'; '.join(problems)}", problems)
    logger.debug("Loaded model %s (order=%d, channels=%d)", p, model.order, model.channels)
    return model


# -----------------------
# SWITCHING
# -----------------------
def day_type(day: _dt.date) -> DayType:
    return "weekend" if day.weekday() >= 5 else "weekday"


def active_submodel(model: PwaModel, day: _dt.date) -> int:
    return model.switch_rule[day_type(day)]


# -----------------------
# SIMULATION
# -----------------------
def _coefficients(sub: SubModel) -> Tuple[float, np.ndarray, np.ndarray]:
    return float(sub.a0), np.asarray(sub.a, dtype=float), np.asarray(sub.b, dtype=float).reshape(len(sub.b), -1)


def _check_binary(u: np.ndarray) -> None:
    if not np.all((u == 0) | (u == 1)):
        raise ValueError(f"inputs must be binary (0/1), got {u.tolist()}")


def _lags(hist: History, n: int, m: int) -> Tuple[np.ndarray, np.ndarray]:
    y_lags = np.asarray(hist.y_past, dtype=float)
    u_lags = np.asarray(hist.u_past, dtype=float).reshape(len(hist.u_past), -1) if hist.u_past else np.zeros((0, n))
    if y_lags.shape != (n,) or u_lags.shape != (m, n):
        raise ValueError(
            f"history must hold {n} output lags and {n} input lags for {m} channels, "
            f"got {y_lags.shape} and {u_lags.shape}"
        )
    _check_binary(u_lags)
    return y_lags, u_lags


def _affine_output(a0, a, b, y_lags, u_lags, u_now, w) -> float:
    # i = 0 term uses the current input; i >= 1 terms use the lag window
    return float(a0 + a @ y_lags + b[:, 0] @ u_now + np.sum(b[:, 1:] * u_lags) + w)


def simulate_step(sub: SubModel, hist: History, u_now: Sequence[int], w: float) -> float:
    a0, a, b = _coefficients(sub)
    n, m = a.shape[0], b.shape[0]
    y_lags, u_lags = _lags(hist, n, m)
    u = np.asarray(u_now, dtype=float)
    if u.shape != (m,):
        raise ValueError(f"u_now must have {m} entries, got {u.shape}")
    _check_binary(u)
    return _affine_output(a0, a, b, y_lags, u_lags, u, w)


def simulate_trajectory(
    model: PwaModel,
    regime: int,
    hist: History,
    schedule,
    noise,
) -> np.ndarray:
    """Predict y over the remaining steps by iterating the active sub-model.

    ``schedule`` is (L, m) binary, ``noise`` has length L; outputs are not clamped.
    """
    a0, a, b = _coefficients(model.submodels[regime])
    n, m = a.shape[0], b.shape[0]
    w = np.asarray(noise, dtype=float).reshape(-1)
    u = np.asarray(schedule, dtype=float).reshape(-1, m) if np.size(schedule) else np.zeros((0, m))
    if u.shape[0] != w.shape[0]:
        raise ValueError(f"schedule has {u.shape[0]} steps but noise has {w.shape[0]}")
    _check_binary(u)

    y_lags, u_lags = _lags(hist, n, m)
    y_lags, u_lags = y_lags.copy(), u_lags.copy()
    out = np.empty(w.shape[0])
    for k in range(w.shape[0]):
        y = _affine_output(a0, a, b, y_lags, u_lags, u[k], w[k])
        out[k] = y
        if n:
            y_lags = np.concatenate(([y], y_lags[:-1]))
            u_lags = np.concatenate((u[k][:, None], u_lags[:, :-1]), axis=1)
    return out


# -----------------------
# RESPONSES (affine structure)
# -----------------------
@lru_cache(maxsize=64)
def _cumulative_responses_cached(a: tuple, b: tuple, length: int) -> Tuple[np.ndarray, np.ndarray]:
    if length == 0:
        noise_cum, input_cum = np.zeros(0), np.zeros((0, len(b)))
    else:
        den = np.concatenate(([1.0], -np.asarray(a, dtype=float)))
        impulse = np.zeros(length)
        impulse[0] = 1.0
        noise_cum = np.cumsum(lfilter([1.0], den, impulse))
        input_cum = np.column_stack(
            [np.cumsum(lfilter(np.asarray(row, dtype=float), den, impulse)) for row in b]
        )
    noise_cum.flags.writeable = False
    input_cum.flags.writeable = False
    return noise_cum, input_cum


def cumulative_responses(sub: SubModel, length: int) -> Tuple[np.ndarray, np.ndarray]:
    """Running sums of the noise and per-channel input impulse responses.

    Entry t is the total effect on y_0..y_t of a unit impulse at time 0 under
    zero history and zero intercept. Results are cached and read-only.
    """
    return _cumulative_responses_cached(
        tuple(float(v) for v in sub.a),
        tuple(tuple(float(v) for v in row) for row in sub.b),
        int(length),
    )
