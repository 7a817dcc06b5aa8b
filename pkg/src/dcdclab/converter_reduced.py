"""Reduced closed-loop model: a 2x2 ODE in (y1, y2) = (sum of phase currents, e).

The PID action is

    U_a = K1*y2 + K2*y2' + int_0^t Kern(t - tau) y2(tau) dtau + phi(t)

with Kern a constant plus two exponentials.  The convolution is realized
by three linear states and phi by two decaying states, so the whole model
is affine between comparator events and runs on the integrator shared
with the full model.

Two PID readings are available.  ``pid_form="printed"`` takes K1, K2, the
kernel and phi exactly as printed.  ``pid_form="derived"`` uses the values
obtained by integrating the filter equations of the full model by parts;
only this form is equivalent to the full model in closed loop.

The decaying states are kicked at comparator switches and at the load
step so that U_a follows the full model, whose filters ignore the impulses
that the jumps of e and e' would otherwise inject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import hybrid
from .converter_full import ControllerGains, ConverterParams, ConverterState
from .hybrid import Mode, pwm_alpha, rk4_affine_propagator, rk4_step
from .waveform import Waveform

PID_FORMS = ("printed", "derived")
COMPARATORS = ("single", "per_phase")
REDUCED_CHANNELS = ("y1", "y2", "U_a", "D0", "alpha", "phi")

# state layout
Y1, Y2, S_I, S_A, S_B, J_A, J_B = range(7)


@dataclass(frozen=True)
class ReducedCoeffs:
    p11: float
    p12: float
    p21: float
    p22: float
    a: float
    b: float
    r_factor: float
    # kernel Kern(u) = k_i + k_a e^{a u} + k_b e^{b u}
    k_i: float
    k_a: float
    k_b: float
    K1: float
    K2: float
    kd_eff: float
    # split of K1 into proportional / a-filter / b-filter parts
    w_p: float
    w_a: float
    w_b: float
    kd_over_td: float
    kdd_over_tdd: float
    pid_form: str
    N_f: int
    U_S: float
    U_ref: float
    L: float
    C: float
    R_C: float
    R_load: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.p11, self.p12], [self.p21, self.p22]])

    @property
    def kernel_terms(self) -> tuple:
        return ((self.k_i, 0.0), (self.k_a, self.a), (self.k_b, self.b))

    def F1(self, sum_alpha: float) -> float:
        return (self.U_S * sum_alpha - self.N_f * self.U_ref) / self.L

    def F2(self, sum_alpha: float) -> float:
        return (self.U_ref / (self.C * self.R_load) - self.R_C * self.F1(sum_alpha)) / self.r_factor

    def forcing(self, sum_alpha: float) -> np.ndarray:
        return np.array([self.F1(sum_alpha), self.F2(sum_alpha)])

    def f_tilde(self, alpha: float, dUref_dt: float = 0.0) -> tuple[float, float]:
        """The forcing pair with a single comparator output, as printed."""
        Ft1 = self.N_f * (alpha * self.U_S - self.U_ref) / self.L
        Ft2 = self.R_C * Ft1 - (self.U_ref / (self.C * self.R_load) + self.r_factor * dUref_dt)
        return Ft1, Ft2


def build_reduced(p: ConverterParams, g: ControllerGains, pid_form: str = "printed",
                  R_load: float | None = None) -> ReducedCoeffs:
    if pid_form not in PID_FORMS:
        raise ValueError(f"pid_form must be one of {PID_FORMS}")
    R = p.R_load if R_load is None else R_load
    L, N = p.L, p.N_f
    r = 1.0 + p.R_C / R
    a, b = g.a, g.b
    wd, wdd = g.K_d / g.T_d, g.K_dd / g.T_dd
    if pid_form == "printed":
        K1, K2 = g.K_d - g.K_dd * b, g.K_dd
        k_a, k_b = -wd * a, wdd * b * b
        w_p, w_a, w_b = 0.0, g.K_d, -g.K_dd * b
    else:
        K1, K2 = g.K_p + wd + wdd * b, wdd
        k_a, k_b = wd * a, wdd * b * b
        w_p, w_a, w_b = g.K_p, wd, wdd * b
    return ReducedCoeffs(
        p11=-p.R_L / L, p12=N / L,
        p21=-1.0 / (r * p.C) + p.R_C * p.R_L / (r * L),
        p22=-(1.0 / (r * p.C * R) + p.R_C * N / (r * L)),
        a=a, b=b, r_factor=r, k_i=g.K_i, k_a=k_a, k_b=k_b, K1=K1, K2=K2,
        kd_eff=g.K_d - g.K_dd * b, w_p=w_p, w_a=w_a, w_b=w_b, kd_over_td=wd,
        kdd_over_tdd=wdd, pid_form=pid_form,
        N_f=N, U_S=p.U_S, U_ref=p.U_ref, L=L, C=p.C, R_C=p.R_C, R_load=R)


def kernel_eval(coeffs: ReducedCoeffs, u):
    if np.any(np.asarray(u) < 0):
        raise ValueError("kernel argument must be nonnegative")
    return coeffs.k_i + coeffs.k_a * np.exp(coeffs.a * u) + coeffs.k_b * np.exp(coeffs.b * u)


@dataclass(frozen=True)
class PhiInit:
    U_ad0: float = 0.0
    U_dd0: float = 0.0
    e0: float = 0.0
    de0: float = 0.0
    U_ai0: float = 0.0


def phi_weights(coeffs: ReducedCoeffs, init: PhiInit) -> tuple[float, float, float]:
    """(c_a, c_b, c_0) with phi(t) = c_a e^{at} + c_b e^{bt} + c_0."""
    wd, wdd = coeffs.kd_over_td, coeffs.kdd_over_tdd
    c_a = init.U_ad0 - wd * init.e0
    if coeffs.pid_form == "printed":
        c_b = init.U_dd0 + wdd * coeffs.b * init.e0 - wdd * init.de0
        return c_a, c_b, 0.0
    c_b = init.U_dd0 - wdd * (coeffs.b * init.e0 + init.de0)
    return c_a, c_b, init.U_ai0


def phi(t, coeffs: ReducedCoeffs, init: PhiInit):
    """Initial-data transient; the printed five-term expression for pid_form='printed'."""
    c_a, c_b, c_0 = phi_weights(coeffs, init)
    return c_a * np.exp(coeffs.a * t) + c_b * np.exp(coeffs.b * t) + c_0


@dataclass(frozen=True)
class ReducedInit:
    t: float
    y1: float
    y2: float
    phi: PhiInit


def reduced_init_from_full(s: ConverterState) -> ReducedInit:
    return ReducedInit(t=s.t, y1=float(sum(s.I)), y2=s.e,
                       phi=PhiInit(U_ad0=s.U_ad, U_dd0=s.U_dd, e0=s.e, de0=s.de_dt, U_ai0=s.U_ai))


@dataclass(frozen=True)
class ReducedOptions:
    pid_form: str = "printed"
    comparator: str = "single"
    switching: bool = True
    alpha_frozen: float = 1.0
    homogeneous: bool = False

    def __post_init__(self):
        if self.pid_form not in PID_FORMS:
            raise ValueError(f"pid_form must be one of {PID_FORMS}")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"comparator must be one of {COMPARATORS}")


class _ReducedSystem:
    def __init__(self, p: ConverterParams, g: ControllerGains, opts: ReducedOptions,
                 h: float | None, c0: float):
        self.p, self.g, self.opts, self.h, self.c0 = p, g, opts, h, c0
        self.T = p.T
        self.switching = opts.switching
        self.offsets = p.phase_offsets if opts.comparator == "per_phase" else (0.0,)
        self._coeffs: dict = {}
        self._sys: dict = {}
        self._prop_h: dict = {}
        self._ua: dict = {}

    def coeffs(self, R_load: float) -> ReducedCoeffs:
        if R_load not in self._coeffs:
            self._coeffs[R_load] = build_reduced(self.p, self.g, self.opts.pid_form, R_load)
        return self._coeffs[R_load]

    def sum_alpha(self, alpha: tuple) -> float:
        if self.opts.comparator == "per_phase":
            return float(sum(alpha))
        return float(alpha[0]) * self.p.N_f

    def forcing(self, mode: Mode) -> np.ndarray:
        if self.opts.homogeneous:
            return np.zeros(2)
        return self.coeffs(mode.R_load).forcing(self.sum_alpha(mode.alpha))

    def system(self, mode: Mode):
        key = (mode.alpha, mode.R_load)
        if key not in self._sys:
            k = self.coeffs(mode.R_load)
            A = np.zeros((7, 7))
            A[:2, :2] = k.matrix
            A[S_I, Y2] = 1.0
            A[S_A, Y2], A[S_A, S_A] = 1.0, k.a
            A[S_B, Y2], A[S_B, S_B] = 1.0, k.b
            A[J_A, J_A], A[J_B, J_B] = k.a, k.b
            c = np.zeros(7)
            c[:2] = self.forcing(mode)
            self._sys[key] = (A, c)
        return self._sys[key]

    def de(self, x, mode: Mode) -> float:
        k = self.coeffs(mode.R_load)
        return k.p21 * x[Y1] + k.p22 * x[Y2] + self.forcing(mode)[1]

    def ua_affine(self, mode: Mode) -> tuple[np.ndarray, float]:
        """(w, w0) with U_a = w @ x + w0 in this mode."""
        key = (mode.alpha, mode.R_load)
        if key not in self._ua:
            k = self.coeffs(mode.R_load)
            w = np.zeros(7)
            w[Y1] = k.K2 * k.p21
            w[Y2] = k.K1 + k.K2 * k.p22
            w[S_I], w[S_A], w[S_B] = k.k_i, k.k_a, k.k_b
            w[J_A] = w[J_B] = 1.0
            self._ua[key] = (w, k.K2 * self.forcing(mode)[1] + self.c0)
        return self._ua[key]

    def U_a(self, x, mode: Mode) -> float:
        w, w0 = self.ua_affine(mode)
        return float(w @ x) + w0

    def duty_affine(self, mode: Mode) -> tuple[np.ndarray, float]:
        w, w0 = self.ua_affine(mode)
        return w / self.p.U_S, (self.p.U_ref + w0) / self.p.U_S

    def duty(self, x, t, mode):
        return (self.p.U_ref + self.U_a(x, mode)) / self.p.U_S

    def grid_propagator(self, mode: Mode):
        key = (mode.alpha, mode.R_load)
        if key not in self._prop_h:
            self._prop_h[key] = rk4_affine_propagator(*self.system(mode), self.h)
        return self._prop_h[key]

    def propagate(self, x, t, tau, mode):
        if tau == 0:
            return x.copy()
        if self.h is not None and abs(tau - self.h) <= 1e-12 * self.h:
            Phi, psi = self.grid_propagator(mode)
            return Phi @ x + psi
        A, c = self.system(mode)
        return rk4_step(lambda z: A @ z + c, x, tau)

    def switch_alpha(self, x, t, mode, alpha):
        # keep U_a continuous: the b-channel absorbs the jump of K2*e'
        x = x.copy()
        k = self.coeffs(mode.R_load)
        x[J_B] -= k.K2 * (self.de(x, Mode(alpha, mode.R_load)) - self.de(x, mode))
        return x

    def load_step(self, x, t, mode, R_new):
        k_old, k_new = self.coeffs(mode.R_load), self.coeffs(R_new)
        new_mode = Mode(mode.alpha, R_new)
        x = x.copy()
        de_old = self.de(x, mode)
        y2_old = x[Y2]
        # U_O = (U_C + R_C*y1)/r with U_C, y1 continuous
        x[Y2] = self.p.U_ref - (k_old.r_factor / k_new.r_factor) * (self.p.U_ref - y2_old)
        d_e = x[Y2] - y2_old
        d_de = self.de(x, new_mode) - de_old
        x[J_A] -= k_new.w_a * d_e
        x[J_B] -= k_new.w_b * d_e + k_new.K2 * d_de
        return x


def _initial_alpha(model: _ReducedSystem, x, t, R_load) -> tuple:
    n = len(model.offsets)
    if not model.switching:
        return tuple(float(model.opts.alpha_frozen) for _ in range(n))
    alpha = tuple(1 for _ in range(n))
    for _ in range(2):
        D0 = model.duty(x, t, Mode(alpha, R_load))
        alpha = tuple(pwm_alpha(t, off, model.T, D0) for off in model.offsets)
    return alpha


def simulate_reduced(coeffs: ReducedCoeffs | None, p: ConverterParams, g: ControllerGains,
                     init: ReducedInit | None = None, horizon: float | None = None,
                     h: float | None = None, options: ReducedOptions | None = None,
                     divergence_limit: float | None = None) -> Waveform:
    """Integrate the reduced model; defaults mirror the full simulator.

    ``coeffs`` pins the PID form when given (its ``pid_form`` overrides the
    options); coefficients for other load values are rebuilt from ``p``.
    The ``alpha`` channel is the mean comparator output over phases and
    ``phi`` the sum of the two decaying states plus the constant term.
    """
    opts = options or ReducedOptions()
    if coeffs is not None and coeffs.pid_form != opts.pid_form:
        opts = replace(opts, pid_form=coeffs.pid_form)
    h = p.T / 500 if h is None else h
    horizon = 200 * p.T if horizon is None else horizon
    if not horizon > 0 or not h > 0:
        raise ValueError("horizon and h must be positive")
    if h > p.T / 200 * (1 + 1e-12):
        raise ValueError("h must not exceed T/200")
    if init is None:
        init = ReducedInit(0.0, 0.0, 0.0, PhiInit())
    R0 = p.R_load if coeffs is None else coeffs.R_load
    k0 = coeffs or build_reduced(p, g, opts.pid_form, R0)
    c_a, c_b, c0 = phi_weights(k0, init.phi)
    model = _ReducedSystem(p, g, opts, h, c0)
    if coeffs is not None:
        model._coeffs[R0] = coeffs
    x0 = np.array([init.y1, init.y2, 0.0, 0.0, 0.0, c_a, c_b])
    mode0 = Mode(_initial_alpha(model, x0, init.t, R0), R0)
    load = None
    if p.load_event is not None:
        load = (p.load_event.t_step, R0 * p.load_event.factor)
    traj = hybrid.integrate(model, x0, init.t, mode0, horizon, h, load,
                            divergence_limit=divergence_limit)
    return _to_waveform(traj, model)


def _to_waveform(traj: hybrid.Trajectory, model: _ReducedSystem) -> Waveform:
    X = np.array(traj.states)
    n = len(X)
    W = np.empty((n, 7))
    W0 = np.empty(n)
    alpha = np.empty(n)
    for i, mode in enumerate(traj.modes):
        W[i], W0[i] = model.ua_affine(mode)
        alpha[i] = model.sum_alpha(mode.alpha) / model.p.N_f
    U_a = np.einsum("ij,ij->i", W, X) + W0
    D0 = (model.p.U_ref + U_a) / model.p.U_S
    phi_col = X[:, J_A] + X[:, J_B] + model.c0
    cols = [X[:, Y1], X[:, Y2], U_a, D0, alpha, phi_col]
    return Waveform(REDUCED_CHANNELS, np.array(traj.times), np.column_stack(cols), traj.events,
                    traj.grid)


def kernel_states_realization(coeffs: ReducedCoeffs, e, t_end: float, n_steps: int = 2000) -> float:
    """Value of int_0^t_end Kern(t_end - tau) e(tau) dtau from the three-state realization.

    The states s_i' = e, s_a' = a s_a + e, s_b' = b s_b + e are integrated
    with RK4; ``e`` is a callable of time.
    """
    a, b = coeffs.a, coeffs.b
    # keep |rate * dt| <= 1/40 so the RK4 error stays far below 1e-8
    n_steps = max(n_steps, math.ceil(40 * max(abs(a), abs(b)) * t_end))
    dt = t_end / n_steps

    # each channel is a scalar linear ODE, so RK4 runs on plain floats
    half = dt / 2

    def rk4(x, lam, e0, em, e1):
        k1 = lam * x + e0
        k2 = lam * (x + half * k1) + em
        k3 = lam * (x + half * k2) + em
        k4 = lam * (x + dt * k3) + e1
        return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    s_i = s_a = s_b = 0.0
    e0 = e(0.0)
    for i in range(n_steps):
        t0 = i * dt
        em, e1 = e(t0 + half), e(t0 + dt)
        s_i += dt / 6 * (e0 + 4 * em + e1)
        s_a = rk4(s_a, a, e0, em, e1)
        s_b = rk4(s_b, b, e0, em, e1)
        e0 = e1
    return coeffs.k_i * s_i + coeffs.k_a * s_a + coeffs.k_b * s_b

__all__ = [
    "COMPARATORS", "PID_FORMS", "REDUCED_CHANNELS", "PhiInit", "ReducedCoeffs", "ReducedInit",
    "ReducedOptions", "build_reduced", "kernel_eval", "kernel_states_realization", "phi",
    "phi_weights", "reduced_init_from_full", "simulate_reduced",
]
