import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError
from scipy import stats

from app.errors import ConfigError, ModelValidationError
from app.services.experiment.measurements import generate_measurements, measurement_rng
from app.services.experiment.runner import (
    EXIT_CONFIG,
    EXIT_MODEL,
    EXIT_RUNTIME,
    build_mpc_config,
    exit_code_for,
    first_saturation_step,
    load_experiment_model,
    load_run_config,
    read_history,
    resolve_goal,
    run_experiment,
    simulate,
    sweep,
    zero_plan_saturation_step,
)
from app.services.experiment.schemas import ExperimentConfig, RunConfigFile, experiment_from_file
from app.services.intervention.schemas.intervention_schemas import RunLog, RunLogEntry
from app.services.intervention.utils.constraints import decisions_to_schedule, is_feasible

from .conftest import A, B


def _exp(tmp_path, **kwargs):
    kwargs.setdefault("n_scenarios", 30)
    kwargs.setdefault("goal", 6016.0)
    return ExperimentConfig(out_dir=tmp_path / "run", **kwargs)


# -----------------------
# CONFIG
# -----------------------
def test_presets_differ_only_in_multiplier():
    base = ExperimentConfig().model_dump()
    for preset, multiplier in [("low", 0.3), ("high", 1.5), ("regular", 1.0)]:
        dumped = ExperimentConfig().with_updates(preset=preset).model_dump()
        assert dumped.pop("preset") == preset
        assert dumped.pop("multiplier") == multiplier
        assert dumped == {k: v for k, v in base.items() if k not in ("preset", "multiplier")}


def test_preset_multiplier_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig(preset="low", multiplier=1.0)
    assert ExperimentConfig(preset="custom", multiplier=0.7).multiplier == 0.7


def test_custom_preset_needs_multiplier():
    run_file = RunConfigFile.model_validate({"experiment": {"preset": "custom"}})
    with pytest.raises(ConfigError):
        experiment_from_file(run_file)
    run_file = RunConfigFile.model_validate({"experiment": {"preset": "custom", "multiplier": 0.8}})
    assert experiment_from_file(run_file).multiplier == 0.8


def test_run_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(broken)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"mpc": {"horizon": 3}}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(unknown)


def test_run_config_file_round_trip(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps({"constraints": {"alpha": 4, "beta": 2.5}, "mpc": {"seed": 7, "goal": 5000}, "experiment": {"preset": "high"}}),
        encoding="utf-8",
    )
    exp = experiment_from_file(load_run_config(path))
    assert (exp.alpha, exp.beta, exp.seed, exp.goal) == (4, 2.5, 7, 5000.0)
    assert exp.multiplier == 1.5


def test_read_history_with_and_without_header(tmp_path):
    plain = tmp_path / "plain.csv"
    plain.write_text("5000\n6000\n5548\n", encoding="utf-8")
    headed = tmp_path / "headed.csv"
    headed.write_text("window_total\n5000\n6000\n5548\n", encoding="utf-8")
    assert read_history(plain) == read_history(headed) == [5000.0, 6000.0, 5548.0]


def test_read_history_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_history(tmp_path / "none.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("5000\nlots\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_history(bad)


def test_goal_resolution_order(tmp_path):
    history = tmp_path / "history.csv"
    history.write_text("\n".join(["4000"] * 30) + "\n", encoding="utf-8")
    assert resolve_goal(ExperimentConfig(goal=5200.0, history_path=history)) == 5200.0
    assert resolve_goal(ExperimentConfig(history_path=history)) == 4500.0
    assert resolve_goal(ExperimentConfig()) == 6016.0


def test_reference_setup_expands_to_forty_steps():
    exp = ExperimentConfig()
    config = build_mpc_config(exp, load_experiment_model(exp))
    assert config.T == 40
    assert config.constraints.alpha == 6
    assert config.constraints.spacing_steps == 2
    assert_allclose(config.constraints.beta, 0.6 * 6 * max(config.costs.c))
    assert config.goal == 6016.0


def test_bad_window_is_a_config_error():
    exp = ExperimentConfig(window_start="09:00", window_end="09:10")
    with pytest.raises(ConfigError):
        build_mpc_config(exp, load_experiment_model(exp))


def test_weekend_submodel_override():
    exp = ExperimentConfig(weekend_submodel={"a0": 60.0, "a": A, "b": B})
    model = load_experiment_model(exp)
    assert len(model.submodels) == 2
    assert model.switch_rule["weekend"] == 1
    assert model.switch_rule["weekday"] == 0


def test_invalid_weekend_submodel():
    exp = ExperimentConfig(weekend_submodel={"a0": 60.0, "a": A[:3], "b": B})
    with pytest.raises(ModelValidationError):
        load_experiment_model(exp)


# -----------------------
# MEASUREMENTS
# -----------------------
def test_degenerate_measurements():
    assert np.all(generate_measurements(137.0, 0.0, 1.0, 40, measurement_rng(1)) == 137.0)
    assert generate_measurements(137.0, 51.0, 1.0, 0, measurement_rng(1)).shape == (0,)


def test_measurements_are_floored_at_zero():
    y = generate_measurements(137.0, 51.0, 0.3, 100000, measurement_rng(3))
    assert y.min() >= 0.0
    mu, sigma = 0.3 * 137.0, 51.0
    z = mu / sigma
    censored_mean = mu * stats.norm.cdf(z) + sigma * stats.norm.pdf(z)
    assert abs(y.mean() - censored_mean) < 2.0
    assert y.mean() > mu


def test_high_preset_mean():
    y = generate_measurements(137.0, 51.0, 1.5, 100000, measurement_rng(5))
    assert abs(y.mean() - 205.5) < 2.0


def test_measurements_are_seeded():
    first = generate_measurements(137.0, 51.0, 1.0, 40, measurement_rng(9))
    second = generate_measurements(137.0, 51.0, 1.0, 40, measurement_rng(9))
    assert np.array_equal(first, second)
    with pytest.raises(ValueError):
        generate_measurements(137.0, -1.0, 1.0, 40, measurement_rng(9))
    with pytest.raises(ValueError):
        generate_measurements(137.0, 1.0, 1.0, -1, measurement_rng(9))


# -----------------------
# ARTIFACTS
# -----------------------
def test_regular_run_writes_artifacts(tmp_path):
    exp = _exp(tmp_path, seed=1, dump_scenarios=True)
    outcome = run_experiment(exp)
    out = tmp_path / "run"
    assert set(outcome.artifacts) == {"runlog", "probability_trace", "scenarios", "summary", "config"}

    runlog = pd.read_csv(out / "runlog.csv")
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert len(runlog) == 40
    assert summary["messages_sent"] == int((runlog["message_type"] > 0).sum()) <= 6
    assert sum(summary["messages_by_type"].values()) == summary["messages_sent"]
    assert_allclose(summary["total_steps"], runlog["measured_steps"].sum(), rtol=1e-6)
    assert_allclose(summary["final_probability"], runlog["prob_estimate"].iloc[-1], atol=1e-6)
    assert summary["goal"] == 6016.0

    u = decisions_to_schedule(runlog["message_type"].tolist(), 3)
    config = outcome.mpc_config
    assert is_feasible(u, np.zeros((0, 3), dtype=int), config.constraints, config.costs) == []

    scenarios = pd.read_csv(out / "scenarios.csv")
    assert len(scenarios) == 40 * 30
    trace = pd.read_csv(out / "probability_trace.csv")
    assert list(trace.columns) == ["step", "clock_time", "prob_estimate", "baseline_prob", "planned_messages"]

    snapshot = json.loads((out / "config.json").read_text(encoding="utf-8"))
    assert snapshot["seed"] == 1 and snapshot["preset"] == "regular"


def test_repeat_runs_are_byte_identical(tmp_path):
    first = run_experiment(_exp(tmp_path / "a", seed=4))
    second = run_experiment(_exp(tmp_path / "b", seed=4))
    for name in ("runlog", "probability_trace", "summary"):
        assert first.artifacts[name].read_bytes() == second.artifacts[name].read_bytes()


def test_low_preset_completes(tmp_path):
    outcome = run_experiment(_exp(tmp_path, preset="low", multiplier=0.3, seed=2))
    assert outcome.log.messages_sent <= 6
    assert len(outcome.log.entries) == 40


def test_missing_model_writes_nothing(tmp_path):
    exp = _exp(tmp_path, model_path=tmp_path / "absent.json")
    with pytest.raises(ModelValidationError) as info:
        run_experiment(exp)
    assert exit_code_for(info.value) == EXIT_MODEL
    assert not (tmp_path / "run").exists()


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == EXIT_CONFIG
    assert exit_code_for(ModelValidationError("x")) == EXIT_MODEL
    assert exit_code_for(RuntimeError("x")) == EXIT_RUNTIME


def test_saturation_step():
    outcome = simulate(ExperimentConfig(n_scenarios=20, goal=-1.0e5))
    assert first_saturation_step(outcome.log) == 1
    assert zero_plan_saturation_step(outcome.log) == 1
    assert outcome.log.messages_sent == 0
    assert all(e.baseline_prob == 1.0 for e in outcome.log.entries)


def test_zero_plan_saturation_needs_empty_plan():
    entries = [
        RunLogEntry(step=1, clock_time="09:00", measured_steps=0.0, message_type=2, prob_estimate=0.97,
                    baseline_prob=0.9, messages_used=1, cost_used=1.0, nodes=3, planned_tail=[2, 0, 0]),
        RunLogEntry(step=2, clock_time="09:15", measured_steps=0.0, message_type=0, prob_estimate=0.96,
                    baseline_prob=0.96, messages_used=1, cost_used=1.0, nodes=2, planned_tail=[0, 0]),
        RunLogEntry(step=3, clock_time="09:30", measured_steps=0.0, message_type=0, prob_estimate=1.0,
                    baseline_prob=1.0, messages_used=1, cost_used=1.0, nodes=1, planned_tail=[0]),
    ]
    log = RunLog(goal=100.0, entries=entries)
    assert first_saturation_step(log) == 1
    assert zero_plan_saturation_step(log) == 2


# -----------------------
# PRESET SWEEP
# -----------------------
@pytest.mark.slow
def test_preset_sweep_properties():
    seeds = range(1, 21)
    frame = sweep(ExperimentConfig(goal=6016.0), ["regular", "low", "high"], seeds)
    assert len(frame) == 60
    assert (frame["messages"] <= 6).all()

    by_preset = {name: group for name, group in frame.groupby("preset")}
    assert by_preset["high"]["messages"].median() <= by_preset["regular"]["messages"].median()

    high = by_preset["high"]
    assert high["saturation_step"].notna().sum() > 10
    settled = high[high["zero_plan_saturation_step"].notna()]
    assert len(settled) > 0
    # fresh scenarios each step can reopen the goal; see DESIGN.md
    assert (settled["messages_after_zero_plan_saturation"] == 0).sum() > len(settled) / 2

    low = by_preset["low"]
    assert (low["final_probability"] <= 0.2).sum() > 10


@pytest.mark.slow
def test_high_activity_messages_after_settling_follow_a_reopened_goal():
    exp = ExperimentConfig(goal=6016.0)
    model = load_experiment_model(exp)
    for seed in range(1, 21):
        log = simulate(exp.with_updates(preset="high", seed=seed), model).log
        settled_at = zero_plan_saturation_step(log)
        if settled_at is None:
            continue
        for entry in log.entries:
            if entry.step > settled_at and entry.message_type:
                assert entry.baseline_prob < entry.prob_estimate, (seed, entry.step)
