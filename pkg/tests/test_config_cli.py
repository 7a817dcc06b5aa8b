import json
from pathlib import Path

import pytest

from dcdclab.cli import main
from dcdclab.compare import COMPARE_HEADER
from dcdclab.config import SCHEMA, load_config, parse_config, schema_text
from dcdclab.errors import ConfigError
from dcdclab.stability import SWEEP_HEADER

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FULL_HEADER = ("t,U_O,U_C,e,D0,U_a,U_ad,U_ai,U_dd,I_1,I_2,I_3,I_4,"
               "alpha_1,alpha_2,alpha_3,alpha_4,R_load")
SHORT = ["--set", "horizon=2e-4", "--no-plots"]


def test_parse_defaults_and_values():
    cfg = parse_config("# c\n\nR_L = 0.02  # trailing\nswitching = off\ntune_bounds_K_p = 0.1, 2\n")
    assert cfg["R_L"] == 0.02 and cfg["switching"] is False
    assert cfg["tune_bounds_K_p"] == (0.1, 2.0)
    assert cfg["C"] == SCHEMA["C"][1]
    assert cfg.sources == {"R_L": 3, "switching": 4, "tune_bounds_K_p": 5}


@pytest.mark.parametrize("text,line", [
    ("R_L = 1\nbogus = 3\n", 2),
    ("\n\nR_L = abc\n", 3),
    ("R_L = 1\nR_L = 2\n", 2),
    ("N_f = 4\njust words\n", 2),
    ("model = hybrid\n", 1),
    ("C = inf\n", 1),
])
def test_line_numbered_errors(text, line):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert ei.value.line == line
    assert f"line {line}" in str(ei.value)


def test_override_errors():
    with pytest.raises(ConfigError) as ei:
        parse_config("", overrides=["nope=1"])
    assert ei.value.line == "--set"
    cfg = parse_config("R_L = 1\n", overrides=["R_L=3"])
    assert cfg["R_L"] == 3.0 and cfg.sources["R_L"] == "--set"


def test_bundled_default_and_schema():
    cfg = load_config()
    assert cfg["load_t_step"] == 1e-3 and cfg["pid_form"] == "derived"
    table = schema_text()
    assert all(f"`{k}`" in table for k in SCHEMA)
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.cfg")


def test_simulate_default(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), *SHORT]) == 0
    lines = (tmp_path / "full.csv").read_text().splitlines()
    assert lines[0] == FULL_HEADER and len(lines) > 100
    assert (tmp_path / "events.csv").read_text().splitlines()[0] == "t,kind"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["mode"] == "simulate" and man["version"]
    assert man["config"]["horizon"] == 2e-4 and "wall_time_s" in man
    assert "full.csv" in man["outputs"]


def test_simulate_reduced_header(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "model=reduced", *SHORT]) == 0
    header = (tmp_path / "reduced.csv").read_text().splitlines()[0]
    assert header == "t,y1,y2,U_a,D0,alpha,phi"


def test_plots_written(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "horizon=1e-4"]) == 0
    assert (tmp_path / "full.png").stat().st_size > 0


def test_compare_mode(tmp_path, capsys):
    assert main(["compare", "--config", str(CONFIGS / "compare.cfg"), "--out", str(tmp_path),
                 *SHORT]) == 0
    assert (tmp_path / "compare.csv").read_text().splitlines()[0] == ",".join(COMPARE_HEADER)
    out = capsys.readouterr().out
    rel = float(next(ln for ln in out.splitlines() if ln.startswith("max_rel_err")).split("=")[1])
    assert rel < 1e-6


def test_compare_step_mismatch(tmp_path, capsys):
    code = main(["compare", "--out", str(tmp_path), "--set", "h=2e-8", "--set", "h_reduced=4e-8",
                 *SHORT])
    assert code == 2
    assert "h_reduced" in capsys.readouterr().err


def test_unknown_mode_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate", "--out", str(tmp_path)])
    assert ei.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("R_L = 0.01\nR_X = 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2


def test_domain_error_exit_1(tmp_path, capsys):
    # a penalty below every attainable objective leaves no feasible point
    code = main(["tune", "--out", str(tmp_path), "--set", "load_t_step=1e-4", "--set", "horizon=2e-4",
                 "--set", "h=5e-8", "--set", "tune_budget=10", "--set", "tune_penalty=1e-300",
                 "--no-plots"])
    assert code == 1
    assert "NoFeasiblePoint" in capsys.readouterr().err


@pytest.mark.parametrize("mode,cfg,files", [
    ("analyze-pencil", "analyze_pencil.cfg", ["pencil_report.txt"]),
    ("reduce-operator", "reduce_operator.cfg", ["reduction_trace.txt"]),
    ("stability", "stability.cfg", ["stability_report.txt"]),
    ("sweep", "sweep.cfg", ["sweep.csv"]),
])
def test_analysis_modes(tmp_path, mode, cfg, files):
    assert main([mode, "--config", str(CONFIGS / cfg), "--out", str(tmp_path), "--no-plots"]) == 0
    for f in files:
        assert (tmp_path / f).read_text().strip()
    if mode == "sweep":
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == ",".join(SWEEP_HEADER) and len(lines) == 1 + 400


def test_pencil_file_errors(tmp_path):
    bad = tmp_path / "p.txt"
    bad.write_text("n = 2\nk = 1\nA0: 1 2 x 4\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text("pencil_file = p.txt\n")
    assert main(["analyze-pencil", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text("pencil_file = nothere.txt\n")
    assert main(["analyze-pencil", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def _cfg_text(values):
    out = []
    for k, v in values.items():
        if v is None:
            v = "none"
        elif isinstance(v, list):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"


def test_manifest_reproduces_run(tmp_path):
    a = tmp_path / "a"
    assert main(["simulate", "--out", str(a), "--set", "K_p=1.5", *SHORT]) == 0
    man = json.loads((a / "manifest.json").read_text())
    cfg = tmp_path / "replay.cfg"
    cfg.write_text(_cfg_text(man["config"]))
    b = tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--no-plots"]) == 0
    assert (a / "full.csv").read_bytes() == (b / "full.csv").read_bytes()
