"""Routh–Hurwitz analysis of the reduced 2x2 system, boundedness checks, parameter sweeps."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .converter_full import ControllerGains, ConverterParams
from .converter_reduced import ReducedCoeffs, build_reduced
from .errors import UnknownAxis
from .waveform import Waveform

SWEEP_HEADER = ("axis1", "axis2", "c1", "c2", "cond1", "cond2", "p21_warning", "pid_cond", "max_re_eig")


@dataclass(frozen=True)
class StabilityReport:
    c1: float
    c2: float
    trace: float
    det: float
    condition_1: bool
    condition_2: bool
    # the first condition as printed, p11 + p12 > 0; reported, never used for the verdict
    printed_c1: float
    printed_condition_1: bool
    p21_sign_warning: bool
    pid_condition: bool
    pid_margin: float
    eigenvalues: tuple

    @property
    def char_poly(self) -> tuple:
        return (1.0, self.c1, self.c2)

    @property
    def margin_1(self) -> float:
        return self.c1

    @property
    def margin_2(self) -> float:
        return self.c2

    @property
    def stable(self) -> bool:
        return self.condition_1 and self.condition_2

    @property
    def max_re_eig(self) -> float:
        return max(z.real for z in self.eigenvalues)

    def to_text(self) -> str:
        ev = " ".join(f"{z.real:.12g}{z.imag:+.12g}j" for z in self.eigenvalues)
        lines = [
            f"char_poly = 1 {self.c1:.12g} {self.c2:.12g}",
            f"trace = {self.trace:.12g}",
            f"det = {self.det:.12g}",
            f"condition_1 = {str(self.condition_1).lower()}",
            f"margin_1 = {self.c1:.12g}",
            f"condition_2 = {str(self.condition_2).lower()}",
            f"margin_2 = {self.c2:.12g}",
            f"printed_c1 = {self.printed_c1:.12g}",
            f"printed_condition_1 = {str(self.printed_condition_1).lower()}",
            f"p21_sign_warning = {str(self.p21_sign_warning).lower()}",
            f"pid_condition = {str(self.pid_condition).lower()}",
            f"pid_margin = {self.pid_margin:.12g}",
            f"eigenvalues = {ev}",
            f"stable = {str(self.stable).lower()}",
        ]
        return "\n".join(lines) + "\n"


def hurwitz_coefficients(P) -> tuple[np.ndarray, np.ndarray]:
    """(c1, c2) of det(lambda I - P) = lambda^2 + c1 lambda + c2; broadcasts over (..., 2, 2)."""
    P = np.asarray(P, dtype=float)
    p11, p12, p21, p22 = P[..., 0, 0], P[..., 0, 1], P[..., 1, 0], P[..., 1, 1]
    return -(p11 + p22), p11 * p22 - p12 * p21


def hurwitz_stable(P) -> np.ndarray:
    c1, c2 = hurwitz_coefficients(P)
    return (c1 > 0) & (c2 > 0)


def eigen_stable(P, chunk: int = 1 << 18) -> np.ndarray:
    """Oracle: both eigenvalues have negative real part (numpy eigvals, chunked)."""
    P = np.asarray(P, dtype=float)
    flat = P.reshape(-1, 2, 2)
    out = np.empty(len(flat), dtype=bool)
    for s in range(0, len(flat), chunk):
        ev = np.linalg.eigvals(flat[s:s + chunk])
        out[s:s + chunk] = ev.real.max(axis=1) < 0
    return out.reshape(P.shape[:-2])


def _quadratic_roots(c1: float, c2: float) -> tuple:
    disc = c1 * c1 - 4.0 * c2
    if disc >= 0:
        sq = np.sqrt(disc)
        # cancellation-free pair
        q = -0.5 * (c1 + np.copysign(sq, c1))
        if q == 0:
            return (complex(0.0), complex(0.0))
        return (complex(q), complex(c2 / q))
    sq = np.sqrt(-disc)
    return (complex(-c1 / 2, sq / 2), complex(-c1 / 2, -sq / 2))


def analyze_matrix(P, pid_margin: float = 1.0, p21_warning: bool = False) -> StabilityReport:
    P = np.asarray(P, dtype=float)
    c1, c2 = (float(v) for v in hurwitz_coefficients(P))
    printed = float(P[0, 0] + P[0, 1])
    return StabilityReport(
        c1=c1, c2=c2, trace=float(P[0, 0] + P[1, 1]), det=c2,
        condition_1=c1 > 0, condition_2=c2 > 0,
        printed_c1=printed, printed_condition_1=printed > 0,
        p21_sign_warning=p21_warning, pid_condition=pid_margin > 0, pid_margin=float(pid_margin),
        eigenvalues=_quadratic_roots(c1, c2))


def analyze_stability(coeffs: ReducedCoeffs) -> StabilityReport:
    r = coeffs.r_factor
    warn = 1.0 / (r * coeffs.C) < coeffs.R_C * (-coeffs.p11) / r
    return analyze_matrix(coeffs.matrix, coeffs.kd_eff, bool(warn))


def _y_channels(wave: Waveform, channels) -> np.ndarray:
    cols = []
    for name in channels:
        if name in wave.names:
            cols.append(wave[name])
        elif name == "y1":
            cols.append(sum(wave[n] for n in wave.names if n.startswith("I_")))
        elif name == "y2":
            cols.append(wave["e"])
        else:
            raise KeyError(name)
    return np.column_stack(cols)


def boundedness_check(wave: Waveform, channels=("y1", "y2"),
                      horizon_tail_fraction: float = 0.2) -> tuple[bool, float]:
    """(bounded, kappa): kappa = max sample norm; bounded when the tail adds < 1% to the max.

    ``y1``/``y2`` are derived from a full-model waveform (sum of I_j, e)
    when not present as channels.
    """
    if len(wave) == 0:
        raise ValueError("empty waveform")
    if not 0 < horizon_tail_fraction < 1:
        raise ValueError("tail fraction must lie in (0, 1)")
    norms = np.linalg.norm(_y_channels(wave, channels), axis=1)
    if not np.all(np.isfinite(norms)):
        return False, float("inf")
    t = wave.times
    t_cut = t[-1] - horizon_tail_fraction * (t[-1] - t[0])
    head = norms[t < t_cut]
    kappa = float(norms.max())
    head_max = float(head.max()) if len(head) else 0.0
    return bool(kappa - head_max < 0.01 * kappa or kappa == 0.0), kappa


_PARAM_AXES = {f.name for f in fields(ConverterParams)} - {"N_f", "load_event"}
_GAIN_AXES = {f.name for f in fields(ControllerGains)}


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int
    scale: str = "lin"

    def values(self) -> np.ndarray:
        if self.count < 1:
            raise ValueError("axis count must be >= 1")
        if self.count == 1:
            return np.array([float(self.lo)])
        if self.scale == "log":
            if self.lo <= 0 or self.hi <= 0:
                raise ValueError("log axis needs positive bounds")
            return np.geomspace(self.lo, self.hi, self.count)
        if self.scale != "lin":
            raise ValueError("axis scale must be 'lin' or 'log'")
        return np.linspace(self.lo, self.hi, self.count)


def _apply(p, g, name, value):
    if name in _PARAM_AXES:
        return replace(p, **{name: float(value)}), g
    if name in _GAIN_AXES:
        return p, replace(g, **{name: float(value)})
    raise UnknownAxis(name)


def _eval_point(args):
    p, g, names, values, pid_form = args
    for n, v in zip(names, values):
        p, g = _apply(p, g, n, v)
    rep = analyze_stability(build_reduced(p, g, pid_form))
    return (*values, rep)


@dataclass
class SweepResult:
    axes: tuple
    rows: list  # (value1, value2 or None, StabilityReport)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_HEADER)
            for v1, v2, rep in self.rows:
                w.writerow([repr(float(v1)), "" if v2 is None else repr(float(v2)),
                            repr(rep.c1), repr(rep.c2), int(rep.condition_1), int(rep.condition_2),
                            int(rep.p21_sign_warning), int(rep.pid_condition), repr(rep.max_re_eig)])
        return path


def sweep(p_base: ConverterParams, g_base: ControllerGains, axes, pid_form: str = "printed",
          jobs: int = 1) -> SweepResult:
    """Grid of stability reports over one or two parameter axes (first axis outermost)."""
    axes = tuple(axes)
    if not 1 <= len(axes) <= 2:
        raise ValueError("sweep takes one or two axes")
    for ax in axes:
        if ax.name not in _PARAM_AXES and ax.name not in _GAIN_AXES:
            raise UnknownAxis(ax.name)
    names = tuple(ax.name for ax in axes)
    grids = [ax.values() for ax in axes]
    if len(axes) == 1:
        points = [(v,) for v in grids[0]]
    else:
        points = [(v1, v2) for v1 in grids[0] for v2 in grids[1]]
    tasks = [(p_base, g_base, names, pt, pid_form) for pt in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_eval_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        out = [_eval_point(tk) for tk in tasks]
    rows = [(o[0], o[1] if len(axes) == 2 else None, o[-1]) for o in out]
    return SweepResult(names, rows)


__all__ = [
    "Axis", "SWEEP_HEADER", "StabilityReport", "SweepResult", "analyze_matrix", "analyze_stability",
    "boundedness_check", "eigen_stable", "hurwitz_coefficients", "hurwitz_stable", "sweep",
]
