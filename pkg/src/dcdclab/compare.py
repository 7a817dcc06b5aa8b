"""Run the full and reduced models on one scenario and compare their outputs."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .converter_full import (ControllerGains, ConverterParams, ConverterState, FullModelOptions,
                             initial_state, simulate)
from .converter_reduced import ReducedOptions, reduced_init_from_full, simulate_reduced

COMPARE_HEADER = ("t", "U_O_full", "U_O_reduced", "abs_err", "rel_err")


@dataclass
class Comparison:
    t: np.ndarray
    U_full: np.ndarray
    U_reduced: np.ndarray
    y1_full: np.ndarray
    y1_reduced: np.ndarray
    wall_time: float

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.U_full - self.U_reduced)

    @property
    def rel_err(self) -> np.ndarray:
        return self.abs_err / np.max(np.abs(self.U_full))

    def summary(self) -> dict:
        def rel(a, b):
            scale_inf = np.max(np.abs(a))
            scale_2 = np.linalg.norm(a)
            d = a - b
            return (float(np.max(np.abs(d)) / scale_inf) if scale_inf else float(np.max(np.abs(d))),
                    float(np.linalg.norm(d) / scale_2) if scale_2 else float(np.linalg.norm(d)))
        u_inf, u_2 = rel(self.U_full, self.U_reduced)
        y_inf, y_2 = rel(self.y1_full, self.y1_reduced)
        return {"max_rel_err": u_inf, "l2_rel_err": u_2, "y1_max_rel_err": y_inf,
                "y1_l2_rel_err": y_2, "samples": len(self.t), "wall_time_s": self.wall_time}

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COMPARE_HEADER)
            for row in zip(self.t, self.U_full, self.U_reduced, self.abs_err, self.rel_err):
                w.writerow([repr(float(v)) for v in row])
        return path


def compare_models(p: ConverterParams, g: ControllerGains, horizon: float | None = None,
                   h: float | None = None, h_reduced: float | None = None,
                   full_options: FullModelOptions | None = None,
                   reduced_options: ReducedOptions | None = None,
                   init: ConverterState | None = None) -> Comparison:
    """U_O of the full model against U_ref - y2 of the reduced one, on the shared grid.

    The reduced model starts from the full model's initial state; its
    comparator mirrors the full model's switching setting.
    """
    h = p.T / 500 if h is None else h
    if h_reduced is not None and h_reduced != h:
        raise ValueError(f"step sizes differ: h={h!r}, h_reduced={h_reduced!r}")
    fo = full_options or FullModelOptions()
    ro = reduced_options or ReducedOptions(pid_form="derived", comparator="per_phase",
                                           switching=fo.switching, alpha_frozen=fo.alpha_frozen)
    start = time.perf_counter()
    s0 = init or initial_state(p, g, fo)
    wf = simulate(p, g, s0, horizon=horizon, h=h, options=fo)
    wr = simulate_reduced(None, p, g, reduced_init_from_full(s0), horizon=horizon, h=h, options=ro)
    wall = time.perf_counter() - start
    mf, mr = wf.on_grid(h, s0.t), wr.on_grid(h, s0.t)
    tf, tr = wf.times[mf], wr.times[mr]
    if len(tf) != len(tr) or not np.allclose(tf, tr, rtol=0, atol=1e-9 * h):
        raise RuntimeError("full and reduced grids do not align")
    y1f = sum(wf[f"I_{j}"] for j in range(1, p.N_f + 1))[mf]
    return Comparison(tf, wf["U_O"][mf], p.U_ref - wr["y2"][mr], y1f, wr["y1"][mr], wall)


__all__ = ["COMPARE_HEADER", "Comparison", "compare_models"]
