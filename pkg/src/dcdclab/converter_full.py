"""Switched model of an N-phase buck converter under PID + second-derivative control.

State vector layout: ``[I_1 .. I_N, U_C, U_ad, U_ai, U_dd]``.  The output
voltage is algebraic,

    U_O = (U_C + R_C * sum(I)) / r,    r = 1 + R_C / R_load,

and the derivative channels of the regulator are driven by de/dt and
d2e/dt2 obtained analytically from the circuit equations (R_load held
piecewise constant, comparator outputs held between switching instants).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import hybrid
from .errors import NonFiniteState
from .hybrid import Mode, pwm_alpha, rk4_affine_propagator, rk4_step
from .waveform import Waveform

__all__ = [
    "ControllerGains", "ConverterParams", "ConverterState", "FullModelOptions", "LoadEvent",
    "algebraic_output", "derivatives", "initial_state", "pwm_alpha", "simulate", "step",
]


@dataclass(frozen=True)
class LoadEvent:
    t_step: float
    factor: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.factor <= 1.0:
            raise ValueError("load step factor must lie in (0, 1]")


@dataclass(frozen=True)
class ConverterParams:
    R_L: float
    R_C: float
    C: float
    L: float
    N_f: int
    U_S: float
    U_ref: float
    R_load: float
    T: float
    load_event: LoadEvent | None = None

    def __post_init__(self):
        if self.R_L < 0 or self.R_C < 0:
            raise ValueError("resistances must be nonnegative")
        for name in ("C", "L", "U_S", "T", "R_load"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.N_f) != self.N_f or self.N_f < 1:
            raise ValueError("N_f must be an integer >= 1")
        object.__setattr__(self, "N_f", int(self.N_f))

    @property
    def phase_offsets(self) -> tuple:
        """Cycle start of phase j is (j-1) * T / N_f."""
        return tuple(j * self.T / self.N_f for j in range(self.N_f))

    def r_factor(self, R_load: float | None = None) -> float:
        return 1.0 + self.R_C / (self.R_load if R_load is None else R_load)

    def with_load(self, R_load: float) -> "ConverterParams":
        return replace(self, R_load=R_load)


@dataclass(frozen=True)
class ControllerGains:
    K_p: float
    K_d: float
    K_i: float
    K_dd: float
    T_d: float
    T_dd: float

    def __post_init__(self):
        if not (self.T_d > 0 and self.T_dd > 0):
            raise ValueError("filter time constants T_d, T_dd must be positive")

    @property
    def a(self) -> float:
        return -1.0 / self.T_d

    @property
    def b(self) -> float:
        return -1.0 / self.T_dd

    @property
    def pid_margin(self) -> float:
        return self.K_d - self.K_dd * self.b

    @property
    def pid_condition(self) -> bool:
        return self.pid_margin > 0

    @classmethod
    def zero(cls, T_d: float = 1e-6, T_dd: float = 1e-6) -> "ControllerGains":
        return cls(0.0, 0.0, 0.0, 0.0, T_d, T_dd)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("K_p", "K_d", "K_i", "K_dd", "T_d", "T_dd")}


@dataclass(frozen=True)
class FullModelOptions:
    switching: bool = True
    alpha_frozen: float = 1.0
    # "exact": d2U_C/dt2 from differentiating dU_C/dt, "literal": with dU_C/dt in the load term
    second_derivative: str = "exact"

    def __post_init__(self):
        if self.second_derivative not in ("exact", "literal"):
            raise ValueError("second_derivative must be 'exact' or 'literal'")


@dataclass(frozen=True)
class ConverterState:
    t: float
    I: tuple
    U_C: float
    U_ad: float
    U_dd: float
    U_ai: float
    R_load: float
    alpha: tuple
    U_O: float = field(default=0.0)
    e: float = field(default=0.0)
    de_dt: float = field(default=0.0)
    d2e_dt2: float = field(default=0.0)
    U_a: float = field(default=0.0)
    D_0: float = field(default=0.0)

    def vector(self) -> np.ndarray:
        return np.array([*self.I, self.U_C, self.U_ad, self.U_ai, self.U_dd], dtype=float)


def algebraic_output(U_C: float, I_sum: float, R_load: float, R_C: float) -> float:
    """Unique solution U_O of U_O = U_C + R_C * (I_sum - U_O / R_load)."""
    if not R_load > 0:
        raise ValueError("R_load must be positive")
    return (U_C + R_C * I_sum) / (1.0 + R_C / R_load)


def _rates(x, alpha, R_load, p: ConverterParams, g: ControllerGains, rule: str):
    N = p.N_f
    I = x[:N]
    U_C, U_ad, U_ai, U_dd = x[N], x[N + 1], x[N + 2], x[N + 3]
    r = 1.0 + p.R_C / R_load
    sum_I = float(np.sum(I))
    U_O = (U_C + p.R_C * sum_I) / r
    e = p.U_ref - U_O
    dI = (np.asarray(alpha, dtype=float) * p.U_S - I * p.R_L - U_O) / p.L
    sum_dI = float(np.sum(dI))
    dU_C = (sum_I - U_O / R_load) / p.C
    dU_O = (dU_C + p.R_C * sum_dI) / r
    de = -dU_O
    sum_d2I = (-p.R_L * sum_dI - N * dU_O) / p.L
    load_term = dU_O if rule == "exact" else dU_C
    d2U_C = (sum_dI - load_term / R_load) / p.C
    d2e = -(d2U_C + p.R_C * sum_d2I) / r
    dx = np.empty(N + 4)
    dx[:N] = dI
    dx[N] = dU_C
    dx[N + 1] = (g.K_d * de - U_ad) / g.T_d
    dx[N + 2] = g.K_i * e
    dx[N + 3] = (g.K_dd * d2e - U_dd) / g.T_dd
    U_a = U_ad + U_ai + g.K_p * e + U_dd
    return dx, (U_O, e, de, d2e, U_a, (p.U_ref + U_a) / p.U_S)


def _make_state(t, x, R_load, alpha, p, g, opts) -> ConverterState:
    N = p.N_f
    _, (U_O, e, de, d2e, U_a, D0) = _rates(x, alpha, R_load, p, g, opts.second_derivative)
    return ConverterState(
        t=float(t), I=tuple(float(v) for v in x[:N]), U_C=float(x[N]), U_ad=float(x[N + 1]),
        U_dd=float(x[N + 3]), U_ai=float(x[N + 2]), R_load=float(R_load), alpha=tuple(alpha),
        U_O=U_O, e=e, de_dt=de, d2e_dt2=d2e, U_a=U_a, D_0=D0)


def _duty_from_vector(x, R_load, p, g) -> float:
    N = p.N_f
    U_O = (x[N] + p.R_C * float(np.sum(x[:N]))) / (1.0 + p.R_C / R_load)
    e = p.U_ref - U_O
    return (p.U_ref + x[N + 1] + x[N + 2] + x[N + 3] + g.K_p * e) / p.U_S


def _initial_alpha(t, x, R_load, p, g, opts) -> tuple:
    if not opts.switching:
        return tuple(float(opts.alpha_frozen) for _ in range(p.N_f))
    D0 = _duty_from_vector(x, R_load, p, g)
    return tuple(pwm_alpha(t, off, p.T, D0) for off in p.phase_offsets)


def initial_state(p: ConverterParams, g: ControllerGains, options: FullModelOptions | None = None,
                  t: float = 0.0, I=None, U_C: float | None = None, U_ad: float = 0.0,
                  U_ai: float = 0.0, U_dd: float = 0.0, R_load: float | None = None) -> ConverterState:
    """Default: every state zero except U_C = U_ref (pre-charged output)."""
    opts = options or FullModelOptions()
    N = p.N_f
    if I is None:
        I = np.zeros(N)
    elif np.isscalar(I):
        I = np.full(N, float(I))
    I = np.asarray(I, dtype=float)
    if I.shape != (N,):
        raise ValueError(f"expected {N} phase currents")
    x = np.array([*I, p.U_ref if U_C is None else U_C, U_ad, U_ai, U_dd], dtype=float)
    R = p.R_load if R_load is None else R_load
    return _make_state(t, x, R, _initial_alpha(t, x, R, p, g, opts), p, g, opts)


def derivatives(s: ConverterState, p: ConverterParams, g: ControllerGains,
                options: FullModelOptions | None = None) -> np.ndarray:
    """Time derivative of ``s.vector()`` with the state's comparator outputs held."""
    opts = options or FullModelOptions()
    return _rates(s.vector(), s.alpha, s.R_load, p, g, opts.second_derivative)[0]


class _FullSystem:
    """Adapter exposing the converter to the shared switched integrator."""

    def __init__(self, p: ConverterParams, g: ControllerGains, opts: FullModelOptions,
                 h: float | None = None, affine: bool = True):
        self.p, self.g, self.opts = p, g, opts
        self.T = p.T
        self.offsets = p.phase_offsets
        self.switching = opts.switching
        self.h = h
        self.affine = affine
        self._sys: dict = {}
        self._prop_h: dict = {}
        self._duty_w: dict = {}

    def system(self, mode: Mode):
        key = (mode.alpha, mode.R_load)
        if key not in self._sys:
            n = self.p.N_f + 4
            rule = self.opts.second_derivative
            c = _rates(np.zeros(n), mode.alpha, mode.R_load, self.p, self.g, rule)[0]
            A = np.empty((n, n))
            for k in range(n):
                unit = np.zeros(n)
                unit[k] = 1.0
                A[:, k] = _rates(unit, mode.alpha, mode.R_load, self.p, self.g, rule)[0] - c
            self._sys[key] = (A, c)
        return self._sys[key]

    def duty_affine(self, mode):
        # D0 is affine in x for fixed R_load
        if mode.R_load not in self._duty_w:
            n = self.p.N_f + 4
            d0 = _duty_from_vector(np.zeros(n), mode.R_load, self.p, self.g)
            w = np.array([_duty_from_vector(np.eye(n)[k], mode.R_load, self.p, self.g) - d0
                          for k in range(n)])
            self._duty_w[mode.R_load] = (w, d0)
        return self._duty_w[mode.R_load]

    def duty(self, x, t, mode):
        w, d0 = self.duty_affine(mode)
        return float(w @ x) + d0

    def grid_propagator(self, mode):
        key = (mode.alpha, mode.R_load)
        if key not in self._prop_h:
            self._prop_h[key] = rk4_affine_propagator(*self.system(mode), self.h)
        return self._prop_h[key]

    def propagate(self, x, t, tau, mode):
        if tau == 0:
            return x.copy()
        if not self.affine:
            rule = self.opts.second_derivative
            return rk4_step(lambda z: _rates(z, mode.alpha, mode.R_load, self.p, self.g, rule)[0], x, tau)
        if self.h is not None and abs(tau - self.h) <= 1e-12 * self.h:
            Phi, psi = self.grid_propagator(mode)
            return Phi @ x + psi
        A, c = self.system(mode)
        return rk4_step(lambda z: A @ z + c, x, tau)

    def switch_alpha(self, x, t, mode, alpha):
        return x

    def load_step(self, x, t, mode, R_new):
        return x


def _load_event_for(p: ConverterParams, R_current: float):
    if p.load_event is None:
        return None
    return (p.load_event.t_step, R_current * p.load_event.factor)


def step(s: ConverterState, h: float, p: ConverterParams, g: ControllerGains,
         options: FullModelOptions | None = None) -> ConverterState:
    """One classical RK4 step of size h, split at comparator and load events."""
    if not h > 0:
        raise ValueError("h must be positive")
    opts = options or FullModelOptions()
    model = _FullSystem(p, g, opts, affine=False)
    load = _load_event_for(p, s.R_load) if s.R_load == p.R_load else None
    traj = hybrid.integrate(model, s.vector(), s.t, Mode(s.alpha, s.R_load), h, h, load)
    x, mode = traj.states[-1], traj.modes[-1]
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("state became non-finite", traj.times[-1])
    return _make_state(traj.times[-1], x, mode.R_load, mode.alpha, p, g, opts)


FULL_CHANNELS_FIXED = ("U_O", "U_C", "e", "D0", "U_a", "U_ad", "U_ai", "U_dd")


def channel_names(N: int) -> tuple:
    return (FULL_CHANNELS_FIXED + tuple(f"I_{j}" for j in range(1, N + 1))
            + tuple(f"alpha_{j}" for j in range(1, N + 1)) + ("R_load",))


def trajectory_to_waveform(traj: hybrid.Trajectory, p: ConverterParams, g: ControllerGains) -> Waveform:
    N = p.N_f
    X = np.array(traj.states)
    R = np.array([m.R_load for m in traj.modes])
    alpha = np.array([m.alpha for m in traj.modes], dtype=float)
    r = 1.0 + p.R_C / R
    I = X[:, :N]
    U_C, U_ad, U_ai, U_dd = X[:, N], X[:, N + 1], X[:, N + 2], X[:, N + 3]
    U_O = (U_C + p.R_C * I.sum(axis=1)) / r
    e = p.U_ref - U_O
    U_a = U_ad + U_ai + g.K_p * e + U_dd
    D0 = (p.U_ref + U_a) / p.U_S
    cols = [U_O, U_C, e, D0, U_a, U_ad, U_ai, U_dd, *I.T, *alpha.T, R]
    return Waveform(channel_names(N), np.array(traj.times), np.column_stack(cols), traj.events,
                    traj.grid)


def simulate(p: ConverterParams, g: ControllerGains, init: ConverterState | None = None,
             horizon: float | None = None, h: float | None = None,
             options: FullModelOptions | None = None,
             divergence_limit: float | None = None) -> Waveform:
    """Integrate the switched model over ``horizon`` with fixed step ``h``.

    Defaults: h = T/500, horizon = 200 T.  Every grid point and every event
    is a sample; switching instants and the load step are listed as events.
    """
    opts = options or FullModelOptions()
    h = p.T / 500 if h is None else h
    horizon = 200 * p.T if horizon is None else horizon
    if not horizon > 0 or not h > 0:
        raise ValueError("horizon and h must be positive")
    if h > p.T / 200 * (1 + 1e-12):
        raise ValueError("h must not exceed T/200")
    s = init or initial_state(p, g, opts)
    model = _FullSystem(p, g, opts, h=h)
    load = _load_event_for(p, s.R_load)
    traj = hybrid.integrate(model, s.vector(), s.t, Mode(s.alpha, s.R_load), horizon, h, load,
                            divergence_limit=divergence_limit)
    return trajectory_to_waveform(traj, p, g)
