"""Flat ``key = value`` run configuration.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Every key is declared in ``SCHEMA`` with its type and default, so unknown
keys and malformed values are rejected with the offending line number.
Values given through ``--set`` overrides are reported as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError

MODES = ("simulate", "compare", "analyze-pencil", "reduce-operator", "stability", "sweep", "tune")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _choice(*options):
    def conv(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    conv.__name__ = "one of " + "/".join(options)
    return conv


def _bounds(s: str) -> tuple:
    parts = [p for p in s.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError("expected 'lo, hi'")
    return float(parts[0]), float(parts[1])


def _str(s: str) -> str:
    return s.strip()


# key: (converter, default, description)
SCHEMA = {
    # circuit
    "R_L": (float, 0.01, "phase series resistance [ohm]"),
    "R_C": (float, 0.01, "capacitor ESR [ohm]"),
    "C": (float, 1e-3, "output capacitance [F]"),
    "L": (float, 1e-5, "per-phase inductance [H]"),
    "N_f": (int, 4, "phase count"),
    "U_S": (float, 12.0, "source voltage [V]"),
    "U_ref": (float, 5.0, "reference voltage [V]"),
    "R_load": (float, 1.0, "initial load resistance [ohm]"),
    "T": (float, 1e-5, "PWM period [s]"),
    "load_t_step": (_opt_float, None, "load-step time [s]; none disables the event"),
    "load_factor": (float, 0.1, "multiplier applied to R_load at the step"),
    # regulator
    "K_p": (float, 0.0, "proportional gain"),
    "K_d": (float, 0.0, "derivative gain [s]"),
    "K_i": (float, 0.0, "integral gain [1/s]"),
    "K_dd": (float, 0.0, "second-derivative gain [s^2]"),
    "T_d": (float, 1e-6, "derivative filter time constant [s]"),
    "T_dd": (float, 1e-6, "second-derivative filter time constant [s]"),
    # scenario
    "model": (_choice("full", "reduced"), "full", "model used by simulate"),
    "horizon": (_opt_float, None, "simulated time [s]; default 200*T"),
    "h": (_opt_float, None, "full-model step [s]; default T/500"),
    "h_reduced": (_opt_float, None, "reduced-model step [s]; must equal h for compare"),
    "switching": (_bool, True, "PWM comparators active; false freezes alpha"),
    "alpha_frozen": (float, 1.0, "comparator output when switching is off"),
    "second_derivative": (_choice("exact", "literal"), "exact", "load term rule in d2e/dt2"),
    "pid_form": (_choice("printed", "derived"), "derived", "reduced-model PID coefficients"),
    "comparator": (_choice("single", "per_phase"), "per_phase", "reduced-model comparator"),
    "homogeneous": (_bool, False, "reduced model without forcing terms"),
    "init_I": (float, 0.0, "initial current of every phase [A]"),
    "init_U_C": (_opt_float, None, "initial capacitor voltage [V]; default U_ref"),
    "init_U_ad": (float, 0.0, "initial derivative-filter state [V]"),
    "init_U_ai": (float, 0.0, "initial integral state [V]"),
    "init_U_dd": (float, 0.0, "initial second-derivative-filter state [V]"),
    "boundedness_tail": (float, 0.2, "tail fraction used by the boundedness check"),
    # pencil / operator analysis
    "pencil_file": (_str, "", "pencil text file (relative to the config file)"),
    "operator_file": (_str, "", "operator text file (relative to the config file)"),
    "max_steps": (int, 0, "reduction step limit; 0 selects the default"),
    "j_max": (int, -1, "LRO sweep bound; -1 selects n*k+2"),
    "rank_tol": (float, 1e-9, "relative rank tolerance"),
    # sweep
    "sweep_axis1": (_str, "R_load", "first sweep parameter"),
    "sweep_axis1_lo": (float, 0.1, "first axis lower end"),
    "sweep_axis1_hi": (float, 10.0, "first axis upper end"),
    "sweep_axis1_count": (int, 11, "first axis point count"),
    "sweep_axis1_scale": (_choice("lin", "log"), "log", "first axis spacing"),
    "sweep_axis2": (_str, "", "second sweep parameter; empty for a 1-D sweep"),
    "sweep_axis2_lo": (float, 0.0, "second axis lower end"),
    "sweep_axis2_hi": (float, 1.0, "second axis upper end"),
    "sweep_axis2_count": (int, 2, "second axis point count"),
    "sweep_axis2_scale": (_choice("lin", "log"), "lin", "second axis spacing"),
    # tuning
    "tune_objective": (_choice("ITAE", "ISE", "settling"), "ITAE", "tuning objective"),
    "tune_budget": (int, 40, "objective evaluations"),
    "tune_screen": (int, -1, "random screening points; -1 selects the default"),
    "tune_penalty": (float, 1e12, "objective value of infeasible gain sets"),
    "tune_bounds_K_p": (_bounds, (1e-3, 10.0), "K_p search box"),
    "tune_bounds_K_d": (_bounds, (1e-8, 1e-3), "K_d search box"),
    "tune_bounds_K_i": (_bounds, (1.0, 1e5), "K_i search box"),
    "tune_bounds_K_dd": (_bounds, (1e-14, 1e-9), "K_dd search box"),
    "tune_bounds_T_d": (_bounds, (1e-7, 1e-5), "T_d search box"),
    "tune_bounds_T_dd": (_bounds, (1e-7, 1e-5), "T_dd search box"),
}


@dataclass
class Config:
    values: dict
    base_dir: Path
    sources: dict  # key -> line number or "--set"

    def __getitem__(self, key):
        return self.values[key]

    def resolve_path(self, key: str) -> Path:
        raw = self.values[key]
        if not raw:
            raise ConfigError(f"{key} is required for this mode", self.sources.get(key))
        path = Path(raw)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f"{key}: file not found: {path}", self.sources.get(key))
        return path

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.values.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def _convert(key: str, raw: str, where):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}", where)
    conv = SCHEMA[key][0]
    try:
        val = conv(raw)
    except ValueError as exc:
        name = getattr(conv, "__name__", "value")
        raise ConfigError(f"bad value for {key} ({name}): {exc}", where) from None
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError(f"{key} must be finite", where)
    return val


def parse_config(text: str, base_dir: Path | str = ".", overrides=()) -> Config:
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    sources: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key in sources:
            raise ConfigError(f"duplicate key {key!r} (first set on line {sources[key]})", lineno)
        values[key] = _convert(key, raw, lineno)
        sources[key] = lineno
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", "--set")
        key, raw = (s.strip() for s in item.split("=", 1))
        values[key] = _convert(key, raw, "--set")
        sources[key] = "--set"
    return Config(values, Path(base_dir), sources)


def load_config(path=None, overrides=()) -> Config:
    """Read a config file, or the bundled default when ``path`` is None."""
    if path is None:
        text = resources.files("dcdclab").joinpath("data/default.cfg").read_text()
        return parse_config(text, Path.cwd(), overrides)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, overrides)


def schema_text() -> str:
    """Documentation table of every key."""
    rows = []
    for key, (conv, default, doc) in SCHEMA.items():
        kind = getattr(conv, "__name__", str(conv)).lstrip("_")
        rows.append(f"| `{key}` | {kind} | `{default}` | {doc} |")
    return "\n".join(["| key | type | default | meaning |", "|---|---|---|---|", *rows])
