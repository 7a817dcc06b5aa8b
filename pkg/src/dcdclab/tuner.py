"""Derivative-free tuning of the six regulator constants.

Search runs in log-space with scipy's bounded Nelder–Mead, restarted from
random screened points.  Unstable, PID-violating or diverging candidates
get a large finite penalty; the returned gains are always feasible.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .converter_full import ControllerGains, ConverterParams, FullModelOptions, simulate
from .converter_reduced import build_reduced
from .errors import NoFeasiblePoint, NonFiniteState
from .stability import StabilityReport, analyze_stability

GAIN_NAMES = ("K_p", "K_d", "K_i", "K_dd", "T_d", "T_dd")
OBJECTIVES = ("ITAE", "ISE", "settling")

DEFAULT_BOUNDS = {
    "K_p": (1e-3, 10.0),
    "K_d": (1e-8, 1e-3),
    "K_i": (1.0, 1e5),
    "K_dd": (1e-14, 1e-9),
    "T_d": (1e-7, 1e-5),
    "T_dd": (1e-7, 1e-5),
}


@dataclass(frozen=True)
class TuningProblem:
    params: ConverterParams
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    objective: str = "ITAE"
    horizon: float | None = None
    h: float | None = None
    penalty: float = 1e12
    divergence_limit: float = 1e6
    settle_band: float = 0.01
    switching: bool = True
    # test hook: replaces the simulator-based objective
    objective_fn: Callable | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        for name in GAIN_NAMES:
            if name not in self.bounds:
                raise ValueError(f"missing bounds for {name}")
            lo, hi = self.bounds[name]
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ValueError(f"bounds for {name} must be finite, positive and ordered")
        if self.objective_fn is None:
            if self.params.load_event is None:
                raise ValueError("the objective is measured after a load event")
            if self.resolved_horizon <= self.params.load_event.t_step:
                raise ValueError("horizon must exceed the load-event time")

    @property
    def resolved_horizon(self) -> float:
        return 200 * self.params.T if self.horizon is None else self.horizon

    @property
    def t_start(self) -> float:
        return self.params.load_event.t_step if self.params.load_event else 0.0


@dataclass
class TuningResult:
    gains: ControllerGains
    objective: float
    evaluations: int
    report: StabilityReport
    trace: list  # best-so-far after each evaluation

    def to_text(self) -> str:
        lines = [f"{k} = {v:.12g}" for k, v in self.gains.as_dict().items()]
        lines += [f"objective = {self.objective:.12g}", f"evaluations = {self.evaluations}"]
        return "\n".join(lines) + "\n" + self.report.to_text()

    def trace_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "best_objective"])
            for i, v in enumerate(self.trace, 1):
                w.writerow([i, repr(float(v))])
        return path


def feasible(problem: TuningProblem, g: ControllerGains) -> tuple[bool, StabilityReport]:
    rep = analyze_stability(build_reduced(problem.params, g))
    return rep.stable and rep.pid_condition, rep


def error_objective(t: np.ndarray, e: np.ndarray, kind: str, t_start: float,
                    U_ref: float = 1.0, band: float = 0.01) -> float:
    m = t >= t_start
    t, e = t[m], e[m]
    if len(t) < 2:
        return 0.0
    if kind == "ITAE":
        return float(np.trapezoid((t - t_start) * np.abs(e), t))
    if kind == "ISE":
        return float(np.trapezoid(e * e, t))
    outside = np.nonzero(np.abs(e) > band * abs(U_ref))[0]
    if len(outside) == 0:
        return 0.0
    if outside[-1] == len(t) - 1:
        return float(t[-1] - t_start)
    return float(t[outside[-1] + 1] - t_start)


def evaluate_gains(problem: TuningProblem, gains: ControllerGains) -> float:
    ok, _ = feasible(problem, gains)
    if not ok:
        return problem.penalty
    if problem.objective_fn is not None:
        return float(problem.objective_fn(gains))
    p = problem.params
    try:
        w = simulate(p, gains, horizon=problem.resolved_horizon, h=problem.h,
                     options=FullModelOptions(switching=problem.switching),
                     divergence_limit=problem.divergence_limit)
    except NonFiniteState:
        return problem.penalty
    val = error_objective(w.times, w["e"], problem.objective, problem.t_start, p.U_ref,
                          problem.settle_band)
    return min(val, problem.penalty) if math.isfinite(val) else problem.penalty


class _Budget(Exception):
    pass


def _gains_from(x, free, fixed) -> ControllerGains:
    vals = dict(fixed)
    vals.update({n: float(math.exp(v)) for n, v in zip(free, x)})
    return ControllerGains(**vals)


def _eval_task(args):
    problem, g = args
    return evaluate_gains(problem, g)


def tune(problem: TuningProblem, budget: int = 200, seed: int = 0, screen: int | None = None,
         jobs: int = 1, x0: ControllerGains | None = None) -> TuningResult:
    """Nelder–Mead in log-space with random restarts, deterministic in ``seed``.

    ``screen`` random points are evaluated first (in parallel when
    jobs > 1), then simplex searches start from the best of them in turn
    until the evaluation budget is spent.
    """
    if budget < 10:
        raise ValueError("budget must be >= 10")
    rng = np.random.default_rng(seed)
    free = [n for n in GAIN_NAMES if problem.bounds[n][0] < problem.bounds[n][1]]
    fixed = {n: problem.bounds[n][0] for n in GAIN_NAMES if n not in free}
    lo = np.log([problem.bounds[n][0] for n in free])
    hi = np.log([problem.bounds[n][1] for n in free])
    screen = min(budget // 4, 2 * len(free) + 2) if screen is None else screen

    state = {"n": 0, "best": math.inf, "best_x": None, "best_rep": None}
    trace: list = []

    def record(x, val):
        state["n"] += 1
        if val < problem.penalty and val < state["best"]:
            g = _gains_from(x, free, fixed)
            ok, rep = feasible(problem, g)
            if ok:
                state["best"], state["best_x"], state["best_rep"] = val, np.array(x), rep
        trace.append(state["best"] if math.isfinite(state["best"]) else problem.penalty)

    def f(x):
        if state["n"] >= budget:
            raise _Budget
        x = np.clip(x, lo, hi)
        val = evaluate_gains(problem, _gains_from(x, free, fixed))
        record(x, val)
        return val

    starts = []
    if x0 is not None:
        starts.append(np.clip(np.log([getattr(x0, n) for n in free]), lo, hi))
    else:
        starts.append(0.5 * (lo + hi))
    cand = [lo + rng.random(len(free)) * (hi - lo) for _ in range(screen)]
    if cand:
        tasks = [(problem, _gains_from(c, free, fixed)) for c in cand]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                vals = list(ex.map(_eval_task, tasks))
        else:
            vals = [_eval_task(tk) for tk in tasks]
        for c, v in zip(cand, vals):
            record(c, v)
        order = np.argsort(vals, kind="stable")
        starts += [cand[k] for k in order if vals[k] < problem.penalty]

    if free:
        k = 0
        while state["n"] < budget:
            start = starts[k] if k < len(starts) else lo + rng.random(len(free)) * (hi - lo)
            k += 1
            try:
                minimize(f, start, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                         options={"maxfev": budget - state["n"], "xatol": 1e-7, "fatol": 1e-14,
                                  "adaptive": len(free) > 3})
            except _Budget:
                break
    else:
        f(np.array([]))

    if state["best_x"] is None:
        raise NoFeasiblePoint(f"no feasible gain set found in {state['n']} evaluations")
    g = _gains_from(state["best_x"], free, fixed)
    return TuningResult(g, state["best"], state["n"], state["best_rep"], trace)


__all__ = [
    "DEFAULT_BOUNDS", "GAIN_NAMES", "OBJECTIVES", "TuningProblem", "TuningResult",
    "error_objective", "evaluate_gains", "feasible", "tune",
]
