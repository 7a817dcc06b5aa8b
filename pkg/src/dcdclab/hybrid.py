"""Fixed-step integration of PWM-switched affine systems with event localization.

Both converter models share this loop.  Between events a model is affine
per ``Mode`` (comparator outputs plus load resistance); events are cycle
starts of each phase, the load step, and comparator crossings, the last
localized by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import NonFiniteState

SNAP_RTOL = 1e-9
BISECT_RTOL = 1e-6
MAX_EVENTS_PER_STEP = 10_000
CHUNK = 64


def pwm_alpha(t: float, dt_j: float, T: float, D0: float, snap: bool = True) -> int:
    """Comparator output: 1 when (t - dt_j) mod T <= D0*T, else 0.

    Remainders within ``SNAP_RTOL*T`` of either end of the cycle are taken
    as 0, so a time that sits on a cycle start up to rounding is read as
    that start.
    """
    pos = math.fmod(t - dt_j, T)
    if pos < 0:
        pos += T
    if snap and (T - pos <= SNAP_RTOL * T or pos <= SNAP_RTOL * T):
        pos = 0.0
    return 1 if pos <= D0 * T else 0


@dataclass(frozen=True)
class Mode:
    alpha: tuple
    R_load: float


class SwitchedModel(Protocol):
    T: float
    offsets: tuple
    switching: bool

    def duty(self, x: np.ndarray, t: float, mode: Mode) -> float: ...

    def propagate(self, x: np.ndarray, t: float, tau: float, mode: Mode) -> np.ndarray: ...

    def switch_alpha(self, x: np.ndarray, t: float, mode: Mode, alpha: tuple) -> np.ndarray: ...

    def load_step(self, x: np.ndarray, t: float, mode: Mode, R_new: float) -> np.ndarray: ...


@dataclass
class Trajectory:
    times: list
    states: list
    modes: list
    events: list
    grid: list  # True for samples on t0 + i*h


def comparator(model: SwitchedModel, x, t: float, mode: Mode, sides: dict | None = None) -> tuple:
    """Comparator outputs at (t, x); ``sides`` pins phases sitting on a cycle start.

    'left' is the limit just before the start (remainder -> T), 'right' the
    start itself (remainder 0).
    """
    D0 = model.duty(x, t, mode)
    out = []
    for j, off in enumerate(model.offsets):
        side = sides.get(j) if sides else None
        if side == "left":
            out.append(1 if D0 >= 1.0 else 0)
        elif side == "right":
            out.append(1 if D0 >= 0.0 else 0)
        else:
            out.append(pwm_alpha(t, off, model.T, D0, snap=False))
    return tuple(out)


def _switch_events(t, old, new):
    return [(t, f"alpha_{j + 1}:{'on' if b else 'off'}")
            for j, (a, b) in enumerate(zip(old, new)) if a != b]


def integrate(model: SwitchedModel, x0, t0: float, mode0: Mode, horizon: float, h: float,
              load_event=None, bisect_rtol: float = BISECT_RTOL,
              divergence_limit: float | None = None) -> Trajectory:
    """Advance from t0 to t0 + horizon on the grid t0 + i*h, splitting at events.

    Every grid point and every event time becomes a sample.  ``load_event``
    is ``(t_step, new_R_load)`` and fires once if t0 < t_step <= t0 + horizon.
    """
    if h <= 0 or horizon <= 0:
        raise ValueError("h and horizon must be positive")
    n_steps = int(round(horizon / h))
    if abs(n_steps * h - horizon) > 1e-9 * horizon:
        n_steps = int(math.ceil(horizon / h - 1e-9))
    snap = SNAP_RTOL * h
    tol = bisect_rtol * h
    T = model.T
    offsets = model.offsets
    switching = model.switching
    n_ph = len(offsets)
    x = np.array(x0, dtype=float)
    t, mode = float(t0), mode0
    times, states, modes, events, grid = [t], [x.copy()], [mode], [], [True]

    # start of the cycle each phase is currently in; next start is start + T
    starts = [0.0] * n_ph
    if switching:
        for j, off in enumerate(offsets):
            starts[j] = off + (math.floor((t - off) / T + SNAP_RTOL)) * T
    pending_load = load_event is not None and t0 < load_event[0] <= t0 + n_steps * h + snap
    t_load = load_event[0] if pending_load else math.inf

    def alpha_at(xv, tv, md, edge=(), side=""):
        # comparator with positions measured from the tracked cycle starts;
        # phases in ``edge`` sit on a cycle start and take the one-sided limit
        D0 = model.duty(xv, tv, md)
        DT = D0 * T
        out = [1 if tv - s <= DT else 0 for s in starts]
        for j in edge:
            out[j] = int(D0 >= 1.0) if side == "left" else int(D0 >= 0.0)
        return tuple(out)

    fast = callable(getattr(model, "grid_propagator", None)) and getattr(model, "h", None) == h
    chunks: dict = {}

    def chunk(md):
        # stacked (Phi^k, psi_k), k = 1..CHUNK, plus the affine duty weights
        if md not in chunks:
            Phi, psi = model.grid_propagator(md)
            n = len(psi)
            P = np.empty((CHUNK, n, n))
            q = np.empty((CHUNK, n))
            P[0], q[0] = Phi, psi
            for k in range(1, CHUNK):
                P[k] = Phi @ P[k - 1]
                q[k] = Phi @ q[k - 1] + psi
            chunks[md] = (P, q, *model.duty_affine(md))
        return chunks[md]

    i = 0
    while i < n_steps:
        if fast:
            t_sched = t_load
            if switching:
                t_sched = min(t_sched, min(starts) + T)
            m = min(CHUNK, n_steps - i)
            if t_sched < math.inf:
                m = min(m, int((t_sched - t0) / h) - i + 1)
                while m > 0 and t0 + (i + m) * h >= t_sched - snap:
                    m -= 1
            if m >= 2:
                P, q, w, w0 = chunk(mode)
                X = P[:m] @ x + q[:m]
                tk = t0 + (i + 1 + np.arange(m)) * h
                ok = np.ones(m, dtype=bool)
                if switching:
                    DT = (X @ w + w0) * T
                    A = (tk[:, None] - np.asarray(starts)[None, :]) <= DT[:, None]
                    ok = np.all(A == np.asarray(mode.alpha, dtype=bool)[None, :], axis=1)
                good = np.isfinite(X).all(axis=1)
                if divergence_limit is not None:
                    good &= np.abs(X).max(axis=1) <= divergence_limit
                if not good.all():
                    kbad = int(np.argmin(good))
                    if ok[:kbad + 1].all():
                        msg = ("state became non-finite" if not np.isfinite(X[kbad]).all()
                               else "state exceeded the divergence limit")
                        raise NonFiniteState(msg, float(tk[kbad]))
                k_ok = m if ok.all() else int(np.argmin(ok))
                if k_ok > 0:
                    times.extend(tk[:k_ok].tolist())
                    states.extend(X[:k_ok])
                    modes.extend([mode] * k_ok)
                    grid.extend([True] * k_ok)
                    x = X[k_ok - 1].copy()
                    t = float(tk[k_ok - 1])
                    i += k_ok
                    if k_ok == m:
                        continue
        i += 1
        t_target = t0 + i * h
        guard = 0
        while True:
            guard += 1
            if guard > MAX_EVENTS_PER_STEP:
                raise NonFiniteState("comparator chattering: too many events in one step", t)
            cand = t_target
            if switching:
                t_next = min(starts) + T
                if t_next < cand:
                    cand = t_next
            if t_load < cand:
                cand = t_load
            if t_target - cand <= snap:
                cand = t_target
            seg_end = cand
            boundary = ()
            if switching and abs(min(starts) + T - seg_end) <= snap:
                boundary = [j for j in range(n_ph) if abs(starts[j] + T - seg_end) <= snap]
            load_now = pending_load and abs(t_load - seg_end) <= snap
            tau = seg_end - t
            x_end = model.propagate(x, t, tau, mode)

            if switching:
                a_end = alpha_at(x_end, seg_end, mode, boundary, "left")
                if a_end != mode.alpha:
                    lo, hi = 0.0, tau
                    while hi - lo > tol:
                        mid = 0.5 * (lo + hi)
                        xm = model.propagate(x, t, mid, mode)
                        if alpha_at(xm, t + mid, mode) != mode.alpha:
                            hi = mid
                        else:
                            lo = mid
                    if hi < tau:
                        t_c = t + hi
                        x_c = model.propagate(x, t, hi, mode)
                        a_new = alpha_at(x_c, t_c, mode)
                        x = model.switch_alpha(x_c, t_c, mode, a_new)
                        events.extend(_switch_events(t_c, mode.alpha, a_new))
                        mode = Mode(a_new, mode.R_load)
                        t = t_c
                        times.append(t)
                        states.append(x.copy())
                        modes.append(mode)
                        grid.append(False)
                        continue
                    x_end = model.switch_alpha(x_end, seg_end, mode, a_end)
                    events.extend(_switch_events(seg_end, mode.alpha, a_end))
                    mode = Mode(a_end, mode.R_load)

            t, x = seg_end, x_end
            if load_now:
                R_new = load_event[1]
                x = model.load_step(x, t, mode, R_new)
                mode = Mode(mode.alpha, R_new)
                pending_load = False
                t_load = math.inf
                events.append((t, "load_step"))
            if switching and (boundary or load_now):
                for j in boundary:
                    starts[j] += T
                a_new = alpha_at(x, t, mode, boundary, "right")
                if a_new != mode.alpha:
                    x = model.switch_alpha(x, t, mode, a_new)
                    events.extend(_switch_events(t, mode.alpha, a_new))
                    mode = Mode(a_new, mode.R_load)
            if seg_end == t_target:
                break
            times.append(t)
            states.append(x.copy())
            modes.append(mode)
            grid.append(False)

        if not math.isfinite(x.sum()):
            raise NonFiniteState("state became non-finite", t)
        if divergence_limit is not None and np.max(np.abs(x)) > divergence_limit:
            raise NonFiniteState("state exceeded the divergence limit", t)
        times.append(t)
        states.append(x)
        modes.append(mode)
        grid.append(True)
    return Trajectory(times, states, modes, events, grid)


def rk4_affine_propagator(A: np.ndarray, c: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (Phi, psi) with rk4_step(x) == Phi @ x + psi for x' = A x + c.

    For an affine right-hand side the classical four-stage step is exactly
    the degree-4 Taylor polynomial of the flow.
    """
    n = A.shape[0]
    I = np.eye(n)
    hA = tau * A
    # Phi = I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24, Horner form
    Phi = I + hA @ (I + hA @ (I / 2 + hA @ (I / 6 + hA / 24)))
    S = tau * (I + hA @ (I / 2 + hA @ (I / 6 + hA / 24)))
    return Phi, S @ c


def rk4_step(f, x: np.ndarray, tau: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * tau * k1)
    k3 = f(x + 0.5 * tau * k2)
    k4 = f(x + tau * k3)
    return x + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
