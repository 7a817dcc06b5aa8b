"""Command-line entry point: ``dcdclab <mode> [--config PATH] [--out DIR] ...``.

Exit status: 0 success, 1 domain error, 2 configuration or usage error.
Each run writes ``manifest.json`` with the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .compare import compare_models
from .config import MODES, Config, load_config
from .converter_full import (ControllerGains, ConverterParams, FullModelOptions, LoadEvent,
                             initial_state, simulate)
from .converter_reduced import ReducedOptions, build_reduced, reduced_init_from_full, simulate_reduced
from .errors import ConfigError, DcdcLabError, FormatError, UnknownAxis
from .pencil import analyze, parse_pencil
from .reduction import default_max_steps, lro_exists, parse_operator, reduce_to_nonsingular
from .stability import Axis, analyze_stability, boundedness_check, sweep
from .tuner import GAIN_NAMES, TuningProblem, tune


def build_params(cfg: Config) -> ConverterParams:
    event = None
    if cfg["load_t_step"] is not None:
        event = LoadEvent(cfg["load_t_step"], cfg["load_factor"])
    return ConverterParams(R_L=cfg["R_L"], R_C=cfg["R_C"], C=cfg["C"], L=cfg["L"], N_f=cfg["N_f"],
                           U_S=cfg["U_S"], U_ref=cfg["U_ref"], R_load=cfg["R_load"], T=cfg["T"],
                           load_event=event)


def build_gains(cfg: Config) -> ControllerGains:
    return ControllerGains(**{n: cfg[n] for n in GAIN_NAMES})


def _params_gains(cfg: Config):
    try:
        return build_params(cfg), build_gains(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _scenario(cfg: Config):
    try:
        p, g = build_params(cfg), build_gains(cfg)
        fo = FullModelOptions(switching=cfg["switching"], alpha_frozen=cfg["alpha_frozen"],
                              second_derivative=cfg["second_derivative"])
        ro = ReducedOptions(pid_form=cfg["pid_form"], comparator=cfg["comparator"],
                            switching=cfg["switching"], alpha_frozen=cfg["alpha_frozen"],
                            homogeneous=cfg["homogeneous"])
        s0 = initial_state(p, g, fo, I=cfg["init_I"], U_C=cfg["init_U_C"], U_ad=cfg["init_U_ad"],
                           U_ai=cfg["init_U_ai"], U_dd=cfg["init_U_dd"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    horizon = cfg["horizon"] if cfg["horizon"] is not None else 200 * p.T
    h = cfg["h"] if cfg["h"] is not None else p.T / 500
    if not (horizon > 0 and h > 0) or h > p.T / 200 * (1 + 1e-12):
        raise ConfigError("need horizon > 0 and 0 < h <= T/200")
    return p, g, fo, ro, s0, horizon, h


def _write(out: Path, name: str, text: str, outputs: list) -> Path:
    path = out / name
    path.write_text(text)
    outputs.append(name)
    return path


def run_simulate(cfg, out, args, outputs, summary):
    p, g, fo, ro, s0, horizon, h = _scenario(cfg)
    if cfg["model"] == "full":
        w = simulate(p, g, s0, horizon=horizon, h=h, options=fo)
        w.to_csv(out / "full.csv")
        w.events_to_csv(out / "events.csv")
        outputs += ["full.csv", "events.csv"]
        bounded, kappa = boundedness_check(w, horizon_tail_fraction=cfg["boundedness_tail"])
        chans = ["U_O", "e", "D0", "I_1", "R_load"]
    else:
        hr = cfg["h_reduced"] if cfg["h_reduced"] is not None else h
        w = simulate_reduced(None, p, g, reduced_init_from_full(s0), horizon=horizon, h=hr, options=ro)
        w.to_csv(out / "reduced.csv")
        w.events_to_csv(out / "events.csv")
        outputs += ["reduced.csv", "events.csv"]
        bounded, kappa = boundedness_check(w, horizon_tail_fraction=cfg["boundedness_tail"])
        chans = ["y1", "y2", "U_a", "D0", "phi"]
    summary.update(samples=len(w), events=len(w.events), bounded=bounded, kappa_estimate=kappa)
    if not args.no_plots:
        from .plotting import plot_waveform
        name = f"{cfg['model']}.png"
        plot_waveform(w, chans, out / name, title=f"{cfg['model']} model")
        outputs.append(name)


def run_compare(cfg, out, args, outputs, summary):
    p, g, fo, ro, s0, horizon, h = _scenario(cfg)
    if cfg["h_reduced"] is not None and cfg["h_reduced"] != h:
        raise ConfigError(f"h_reduced ({cfg['h_reduced']!r}) must equal h ({h!r}) for compare",
                          cfg.sources.get("h_reduced"))
    cmp = compare_models(p, g, horizon=horizon, h=h, full_options=fo, reduced_options=ro, init=s0)
    cmp.to_csv(out / "compare.csv")
    outputs.append("compare.csv")
    summary.update(cmp.summary())
    if not args.no_plots:
        from .plotting import plot_comparison
        plot_comparison(cmp, out / "compare.png")
        outputs.append("compare.png")


def _read(cfg, key):
    path = cfg.resolve_path(key)
    return path, path.read_text()


def run_pencil(cfg, out, args, outputs, summary):
    path, text = _read(cfg, "pencil_file")
    try:
        pen = parse_pencil(text)
    except FormatError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    rep = analyze(pen, tol=cfg["rank_tol"])
    _write(out, "pencil_report.txt", rep.to_text(), outputs)
    summary.update(det_degree=rep.det_degree, finite_dim=rep.finite_dim, index_l=rep.index_l)


def run_operator(cfg, out, args, outputs, summary):
    path, text = _read(cfg, "operator_file")
    try:
        op = parse_operator(text)
    except FormatError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    max_steps = cfg["max_steps"] or default_max_steps(op)
    trace = reduce_to_nonsingular(op, max_steps, tol=cfg["rank_tol"])
    j_max = cfg["j_max"] if cfg["j_max"] >= 0 else None
    lro = lro_exists(op, j_max, tol=cfg["rank_tol"])
    text = trace.to_text() + f"lro_exists = {str(lro.exists).lower()}\n"
    text += f"lro_witness = {'none' if lro.witness is None else lro.witness}\n"
    _write(out, "reduction_trace.txt", text, outputs)
    summary.update(terminal_status=trace.terminal_status, steps=trace.step_count,
                   lro_exists=lro.exists, lro_witness=lro.witness)


def run_stability(cfg, out, args, outputs, summary):
    p, g = _params_gains(cfg)
    rep = analyze_stability(build_reduced(p, g, cfg["pid_form"]))
    _write(out, "stability_report.txt", rep.to_text(), outputs)
    summary.update(stable=rep.stable, pid_condition=rep.pid_condition, c1=rep.c1, c2=rep.c2)


def run_sweep(cfg, out, args, outputs, summary):
    p, g = _params_gains(cfg)
    axes = [Axis(cfg["sweep_axis1"], cfg["sweep_axis1_lo"], cfg["sweep_axis1_hi"],
                 cfg["sweep_axis1_count"], cfg["sweep_axis1_scale"])]
    if cfg["sweep_axis2"]:
        axes.append(Axis(cfg["sweep_axis2"], cfg["sweep_axis2_lo"], cfg["sweep_axis2_hi"],
                         cfg["sweep_axis2_count"], cfg["sweep_axis2_scale"]))
    try:
        res = sweep(p, g, axes, cfg["pid_form"], jobs=args.jobs)
    except UnknownAxis as exc:
        raise ConfigError(f"unknown sweep axis {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res.to_csv(out / "sweep.csv")
    outputs.append("sweep.csv")
    summary.update(points=len(res.rows), stable_points=sum(r[2].stable for r in res.rows))
    if not args.no_plots:
        from .plotting import plot_sweep
        plot_sweep(res, out / "sweep.png")
        outputs.append("sweep.png")


def run_tune(cfg, out, args, outputs, summary):
    p, _, fo, _, _, horizon, h = _scenario(cfg)
    bounds = {n: cfg[f"tune_bounds_{n}"] for n in GAIN_NAMES}
    try:
        prob = TuningProblem(p, bounds=bounds, objective=cfg["tune_objective"], horizon=horizon,
                             h=h, penalty=cfg["tune_penalty"], switching=fo.switching)
        screen = None if cfg["tune_screen"] < 0 else cfg["tune_screen"]
        res = tune(prob, budget=cfg["tune_budget"], seed=args.seed, screen=screen, jobs=args.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write(out, "tuning_result.txt", res.to_text(), outputs)
    res.trace_to_csv(out / "tuning_trace.csv")
    outputs.append("tuning_trace.csv")
    summary.update(objective=res.objective, evaluations=res.evaluations, **res.gains.as_dict())
    if not args.no_plots:
        from .plotting import plot_trace
        plot_trace(res.trace, out / "tuning_trace.png")
        outputs.append("tuning_trace.png")


RUNNERS = {
    "simulate": run_simulate,
    "compare": run_compare,
    "analyze-pencil": run_pencil,
    "reduce-operator": run_operator,
    "stability": run_stability,
    "sweep": run_sweep,
    "tune": run_tune,
}
assert set(RUNNERS) == set(MODES)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dcdclab",
        description="Multiphase buck converter models, DAE pencil tools and regulator tuning.",
        epilog="exit status: 0 success, 1 domain error, 2 config or usage error")
    ap.add_argument("mode", choices=MODES, help="what to run")
    ap.add_argument("--config", type=Path, help="config file (default: bundled default)")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key (repeatable)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweep/tune")
    ap.add_argument("--seed", type=int, default=0, help="tuner seed")
    ap.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return ap


def _json_safe(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    if args.jobs < 1:
        ap.error("--jobs must be >= 1")
    start = time.perf_counter()
    outputs: list = []
    summary: dict = {}
    try:
        cfg = load_config(args.config, args.overrides)
        args.out.mkdir(parents=True, exist_ok=True)
        RUNNERS[args.mode](cfg, args.out, args, outputs, summary)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DcdcLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    manifest = {
        "tool": "dcdclab",
        "version": __version__,
        "mode": args.mode,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config_file": None if args.config is None else str(args.config.resolve()),
        "overrides": args.overrides,
        "seed": args.seed,
        "jobs": args.jobs,
        "config": cfg.as_dict(),
        "summary": {k: _json_safe(v) for k, v in summary.items()},
        "outputs": outputs,
        "wall_time_s": time.perf_counter() - start,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for k, v in summary.items():
        print(f"{k} = {_json_safe(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
