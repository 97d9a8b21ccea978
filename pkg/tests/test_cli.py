import csv
import io

import numpy as np
import pytest

from vibrastab.cli import ConfigError, RunConfig, load_config, main, parse_config_text, sweep_boundary_offsets


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def run(tmp_path, *args):
    return main([*args, "--output_dir", str(tmp_path)])


def test_config_parsing(tmp_path):
    text = "# comment\ndelta = 0.2  # trailing\nk=50\ncutoff_N = none\ndelta_grid = 0.1, 0.2\nsvg = yes\n"
    vals = parse_config_text(text)
    assert vals == {"delta": 0.2, "k": 50.0, "cutoff_N": None, "delta_grid": (0.1, 0.2), "svg": True}
    p = tmp_path / "run.cfg"
    p.write_text(text)
    cfg = load_config(p, {"k": 75.0})
    assert cfg.k == 75.0 and cfg.delta == 0.2
    with pytest.raises(ConfigError):
        parse_config_text("colour = red")
    with pytest.raises(ConfigError):
        parse_config_text("k = fast")
    with pytest.raises(ConfigError):
        parse_config_text("just words")
    with pytest.raises(ConfigError):
        RunConfig(k=0.5)
    with pytest.raises(ConfigError):
        RunConfig(init="noise")


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["verify", "--help"]) == 0
    assert run(tmp_path, "verify", "--bogus", "1") == 2
    assert run(tmp_path, "verify", "--delta") == 2
    assert run(tmp_path, "verify", "--config", str(tmp_path / "nope.cfg")) == 2
    assert run(tmp_path, "mode", "--n", "0") == 2
    assert "error" in capsys.readouterr().err


def test_verify_harmonic(tmp_path, capsys):
    assert run(tmp_path, "verify") == 0
    assert "Assumption 1 passed" in capsys.readouterr().out
    rows = {r["quantity"]: r for r in read_csv(tmp_path / "assumptions.csv")}
    assert float(rows["gamma"]["value"]) == pytest.approx(1 / (8 * np.pi**2), rel=1e-8)


def test_verify_constant_fails(tmp_path, capsys):
    p = tmp_path / "g.csv"
    p.write_text("t,g\n0,1\n0.5,1\n1,1\n")
    assert run(tmp_path, "verify", "--excitation", str(p)) == 1
    assert "Assumption 1 failed, mean=1.0" in capsys.readouterr().out


def test_verify_missing_csv(tmp_path):
    assert run(tmp_path, "verify", "--excitation", str(tmp_path / "missing.csv")) == 2


def test_mode_reports_and_appends(tmp_path, capsys):
    assert run(tmp_path, "mode") == 0
    assert run(tmp_path, "mode", "--delta", "0") == 0
    assert run(tmp_path, "mode", "--n", "100") == 0
    out = capsys.readouterr().out
    assert "Lambda1" in out and "monodromy eigenvalues" in out
    rows = read_csv(tmp_path / "modes.csv")
    assert [r["verdict"] for r in rows] == ["asymptotically_stable", "unstable", "asymptotically_stable"]
    assert [r["side"] for r in rows] == ["stable", "unstable", "stable"]
    text = (tmp_path / "modes.csv").read_text()
    assert text.count("# config:") == 3 and text.count("n,delta,k") == 1


def test_simulate_zero_data(tmp_path):
    assert run(tmp_path, "simulate", "--init", "zero", "--periods", "20", "--tail", "2") == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    assert len(rows) == 21
    assert all(float(r[c]) == 0 for r in rows for c in ("h1_sq", "vel_sq", "norm", "lyapunov"))


def test_simulate_stable_decreases(tmp_path):
    assert run(tmp_path, "simulate", "--periods", "3000", "--tail", "4") == 0
    norms = [float(r["norm"]) for r in read_csv(tmp_path / "trajectory.csv")]
    assert norms[-1] < 0.2 * norms[0]
    (summary,) = read_csv(tmp_path / "summary.csv")
    assert summary["verdict"] == "asymptotically_stable" and float(summary["sigma"]) > 0


def test_simulate_unstable_and_blow_up(tmp_path):
    assert run(tmp_path, "simulate", "--delta", "0.05", "--periods", "200", "--tail", "0") == 0
    norms = [float(r["norm"]) for r in read_csv(tmp_path / "trajectory.csv")]
    assert norms[-1] > 10 * norms[0]
    (summary,) = read_csv(tmp_path / "summary.csv")
    assert summary["verdict"] == "unstable" and float(summary["sigma"]) < 0
    assert run(tmp_path, "simulate", "--delta", "0.01", "--k", "10", "--periods", "100000", "--tail", "0",
               "--steps_per_period", "1024") == 0  # fmt: skip
    (summary,) = read_csv(tmp_path / "summary.csv")
    assert summary["blew_up"] == "true" and summary["verdict"] == "unstable"


def test_simulate_reports_precondition_as_config_error(tmp_path):
    assert run(tmp_path, "simulate", "--N_sim", "4") == 2


def test_sweep_empty_grid(tmp_path):
    assert run(tmp_path, "sweep") == 2
    assert run(tmp_path, "sweep", "--delta_grid", "0.1") == 2


def test_sweep_stable_side(tmp_path):
    args = ("sweep", "--delta_grid", "0.15,0.2", "--k_grid", "100,150", "--periods", "20", "--steps_per_period", "1024")
    assert run(tmp_path, *args) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 4
    assert [(r["k_index"], r["delta_index"]) for r in rows] == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]
    assert all(r["side"] == "stable" and r["verdict"] == "asymptotically_stable" for r in rows)
    assert all(r["verdict_8"] == "asymptotically_stable" for r in rows)


def test_sweep_records_row_failures(tmp_path):
    args = ("sweep", "--delta_grid", "0.1,5000", "--k_grid", "1", "--periods", "10", "--burn_in", "0",
            "--steps_per_period", "1024")  # fmt: skip
    assert run(tmp_path, *args) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert rows[0]["error"] == "" and rows[0]["verdict"]
    assert "Error" in rows[1]["error"] and rows[1]["verdict"] == ""


def test_sweep_thread_count_does_not_change_output(tmp_path, monkeypatch):
    args = ("sweep", "--delta_grid", "0.05,0.1,0.15", "--k_grid", "80,120", "--periods", "12", "--burn_in", "2",
            "--steps_per_period", "1024", "--svg", "true")  # fmt: skip
    monkeypatch.setenv("VIBRASTAB_THREADS", "1")
    assert run(tmp_path, *args) == 0
    first = (tmp_path / "sweep.csv").read_bytes()
    svg = (tmp_path / "sweep.svg").read_text()
    assert svg.startswith("<svg") and "<polyline" in svg
    monkeypatch.setenv("VIBRASTAB_THREADS", "4")
    assert run(tmp_path, *args) == 0
    assert (tmp_path / "sweep.csv").read_bytes() == first
    monkeypatch.setenv("VIBRASTAB_THREADS", "zero")
    assert run(tmp_path, *args) == 2


def test_boundary_offsets_helper():
    d = [0.1, 0.2, 0.3, 0.4]
    # boundary at 0.25: cells 0.1, 0.2 unstable, 0.3, 0.4 stable
    good = [["unstable", "unstable", "stable", "stable"]]
    assert sweep_boundary_offsets(d, [1.0], good, [0.25]) == []
    off_by_one = [["unstable", "unstable", "unstable", "stable"]]
    assert sweep_boundary_offsets(d, [1.0], off_by_one, [0.25]) == [0]
    far = [["stable", "unstable", "stable", "stable"]]
    assert sweep_boundary_offsets(d, [1.0], far, [0.25]) == [1]
