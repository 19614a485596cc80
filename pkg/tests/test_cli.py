import json
import subprocess
import sys

import pytest

from relaxim.cli import main
from relaxim.config import ConfigError, build_model, build_sequence, default_config, parse_config_text
from relaxim.nonlin import DiagonalLinear, Zero


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_config_defaults_and_hash():
    cfg = default_config()
    assert cfg["eps"] == 0.05 and cfg["N"] == "auto"
    other = parse_config_text("eps = 0.05\n")
    assert other.hash() == cfg.hash()
    assert parse_config_text("eps = 0.01\n").hash() != cfg.hash()


@pytest.mark.parametrize("text,needle", [
    ("foo = 1\n", "unknown key 'foo'"),
    ("eps = 0.1\neps = 0.2\n", "duplicate key 'eps'"),
    ("eps = -1\n", "bad value for 'eps'"),
    ("just text\n", "expected 'key = value'"),
    ("N = 0\n", "bad value for 'N'"),
    ("operator.kind = custom\n", "needs operator.values"),
    ("nonlinearity.kind = table\nnonlinearity.table = missing.csv\n", "does not exist"),
])
def test_config_errors_name_the_line(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, "x.cfg")
    assert needle in str(exc.value)


def test_build_model_kinds():
    cfg = parse_config_text("nonlinearity.kind = diagonal_linear\nnonlinearity.c = 0.25\n")
    seq = build_sequence(cfg)
    assert seq.count == 16
    F = build_model(cfg, seq)
    assert isinstance(F, DiagonalLinear) and F.declared_L == 0.25
    assert isinstance(build_model(parse_config_text("nonlinearity.kind = constant\n"), seq), Zero)


def test_analyze_reference(tmp_path, capsys):
    code = main(["analyze", "--out", str(tmp_path / "a")])
    out = capsys.readouterr().out
    assert code == 0
    assert "theta = 2.9289322" in out and "verdict: PASS" in out
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["schema_version"] == "1.0" and rep["verdict"] == "PASS"
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["files"] == ["report.json"] and man["config_hash"] == rep["config_hash"]


def test_analyze_failing_verdict(tmp_path, capsys):
    cfg = _write(tmp_path, "eps = 0.1\n")
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "FAIL (eps condition)" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "eps = 0.05\nfoo = 1\n", "mal.cfg")
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "mal.cfg:2: unknown key 'foo'" in capsys.readouterr().err
    assert main(["analyze", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_refused_construction_exit_code(tmp_path):
    cfg = _write(tmp_path, "L = 2.0\nN = 1\nnonlinearity.kind = zero\n")
    assert main(["construct", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_counterexample_command(tmp_path, capsys):
    cfg = _write(tmp_path, "operator.kind = custom\noperator.values = "
                 + ", ".join(str(n * n) for n in range(1, 17)) + "\n")
    assert main(["counterexample", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert rep["admissible_N_intersection"] == []
    assert rep["sampled_lipschitz"] < rep["L"]


def test_construct_and_env_root(tmp_path, monkeypatch):
    monkeypatch.setenv("RELAXIM_OUT", str(tmp_path / "env"))
    cfg = _write(tmp_path, "nonlinearity.kind = zero\nchart.random = 0\nchart.axis_points = 3\n")
    assert main(["construct", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "env" / "construct" / "report.json").read_text())
    assert rep["lipschitz_of_M"]["max_ratio"] == pytest.approx(1.4731903780630885, rel=1e-9)
    assert (tmp_path / "env" / "construct" / "chart.csv").exists()


def test_outputs_are_reproducible(tmp_path):
    cfg = _write(tmp_path, "nonlinearity.kind = diagonal_linear\ncompare.eps = 0.01, 0.001\n")
    for d in ("x", "y"):
        assert main(["compare-eps", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("report.json", "manifest.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "relaxim.cli", "analyze", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "admissible N" in res.stdout
