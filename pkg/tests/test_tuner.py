import math
from dataclasses import replace

import numpy as np
import pytest

from dcdclab.converter_full import ControllerGains
from dcdclab.errors import NoFeasiblePoint
from dcdclab.tuner import (GAIN_NAMES, TuningProblem, error_objective, evaluate_gains, feasible,
                           tune)

TARGET = ControllerGains(K_p=0.8, K_d=3e-6, K_i=2500.0, K_dd=2e-12, T_d=2e-6, T_dd=8e-7)


def surrogate(g):
    return sum((math.log(getattr(g, n)) - math.log(getattr(TARGET, n))) ** 2 for n in GAIN_NAMES)


@pytest.fixture
def surrogate_problem(params):
    return TuningProblem(params, objective_fn=surrogate)


def test_problem_validation(params, params_step):
    with pytest.raises(ValueError):
        TuningProblem(params)                       # no load event
    with pytest.raises(ValueError):
        TuningProblem(params_step, horizon=0.5e-3)  # horizon before the step
    with pytest.raises(ValueError):
        TuningProblem(params_step, objective="IAE")
    bad = dict(TuningProblem(params_step).bounds, K_p=(2.0, 1.0))
    with pytest.raises(ValueError):
        TuningProblem(params_step, bounds=bad)
    with pytest.raises(ValueError):
        tune(TuningProblem(params, objective_fn=surrogate), budget=5)


def test_error_objective_examples():
    t = np.linspace(0, 1, 1001)
    e = np.sin(7 * t) * 0.3
    assert error_objective(t, 0 * t, "ITAE", 0.2) == 0.0
    assert error_objective(t, 2 * e, "ITAE", 0.2) == pytest.approx(2 * error_objective(t, e, "ITAE", 0.2),
                                                                  rel=1e-14)
    assert error_objective(t, 2 * e, "ISE", 0.0) == pytest.approx(4 * error_objective(t, e, "ISE", 0.0))
    assert error_objective(t, np.ones_like(t), "ITAE", 0.0) == pytest.approx(0.5, rel=1e-6)
    e_s = np.where(t < 0.6, 1.0, 0.0)
    assert error_objective(t, e_s, "settling", 0.1, U_ref=5.0) == pytest.approx(0.5, abs=2e-3)


def test_penalty_paths(params_step, gains):
    prob = TuningProblem(params_step, horizon=150 * params_step.T)
    bad = replace(gains, K_d=-1.0)                  # PID condition violated
    assert not feasible(prob, bad)[0]
    assert evaluate_gains(prob, bad) == prob.penalty
    diverging = TuningProblem(params_step, horizon=150 * params_step.T, divergence_limit=1.0)
    assert evaluate_gains(diverging, gains) == diverging.penalty


def test_surrogate_convergence(surrogate_problem):
    res = tune(surrogate_problem, budget=500, seed=0)
    assert res.evaluations <= 500
    for n in GAIN_NAMES:
        assert getattr(res.gains, n) == pytest.approx(getattr(TARGET, n), rel=1e-3)
    ok, rep = feasible(surrogate_problem, res.gains)
    assert ok and rep.stable and res.report.stable


def test_trace_monotone_and_length(surrogate_problem, tmp_path):
    res = tune(surrogate_problem, budget=120, seed=4)
    assert len(res.trace) == res.evaluations == 120
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.trace[-1] == res.objective
    lines = res.trace_to_csv(tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "iter,best_objective" and len(lines) == 121


def test_determinism(surrogate_problem):
    a = tune(surrogate_problem, budget=80, seed=11)
    b = tune(surrogate_problem, budget=80, seed=11)
    assert a.gains == b.gains and a.trace == b.trace and a.to_text() == b.to_text()
    c = tune(surrogate_problem, budget=80, seed=12)
    assert c.trace != a.trace


def test_all_penalty_landscape(params):
    prob = TuningProblem(params, objective_fn=lambda g: 1e12)
    with pytest.raises(NoFeasiblePoint):
        tune(prob, budget=25)


def test_parallel_screening_matches(surrogate_problem):
    a = tune(surrogate_problem, budget=40, seed=2, screen=8)
    b = tune(surrogate_problem, budget=40, seed=2, screen=8, jobs=2)
    assert a.gains == b.gains and a.trace == b.trace


def test_real_objective_returns_feasible(params_step):
    p = replace(params_step, load_event=replace(params_step.load_event, t_step=2e-4))
    prob = TuningProblem(p, horizon=4e-4, h=p.T / 200)
    res = tune(prob, budget=12, seed=0)
    ok, rep = feasible(prob, res.gains)
    assert ok and rep.stable and rep.pid_condition
    assert res.objective < prob.penalty
    assert "stable = true" in res.to_text()
