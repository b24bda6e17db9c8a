import json
import math
import subprocess
import sys

import pytest

from dressedqd import cli

SCEN = {
    "schema_version": 1,
    "experiment": "stark-scan",
    "cascade": {},
    "sweep": {"variable": "delta_over_shift", "grid": [0, 5, 20]},
    "settings": {"target_shift": -12.0},
    "output": "stark.csv",
}


def write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def with_(doc, **kw):
    out = json.loads(json.dumps(doc))
    out.update(kw)
    return out


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, SCEN)]) == 0
    assert capsys.readouterr().out.strip().endswith("ok")


def test_negative_rate_reports_field(tmp_path, capsys):
    doc = with_(SCEN, cascade={"gamma_X": -1.0})
    assert cli.main(["validate", write(tmp_path, doc)]) == 2
    err = capsys.readouterr().err
    assert "cascade" in err and "gamma_X" in err


def test_infeasible_stark_pair(tmp_path, capsys):
    doc = with_(SCEN, settings={"target_shift": 12.0})
    assert cli.main(["validate", write(tmp_path, doc)]) == 2
    assert "drive_for_shift" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [
    {"colour": 1},
    {"cascade": {"omega": 3.0}},
    {"numerics": {"step": 0.1}},
    {"settings": {"target_shift": -12.0, "extra": 1}},
    {"schema_version": 2},
    {"experiment": "nope"},
    {"sweep": {"variable": "omega_cw", "grid": [1]}},
    {"sweep": {"variable": "delta_over_shift", "grid": []}},
    {"cascade": {"delta": "large"}},
    {"output": "/etc/passwd"},
])
def test_schema_rejections(tmp_path, patch):
    assert cli.main(["validate", write(tmp_path, with_(SCEN, **patch))]) == 2


def test_unreadable_file(tmp_path):
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["validate", str(bad)]) == 2


def test_lint_warns_for_overlapping_peaks(tmp_path, capsys):
    doc = {"schema_version": 1, "experiment": "indist-scan",
           "sweep": {"variable": "omega_cw", "grid": [3.0, 30.0]}}
    assert cli.main(["validate", write(tmp_path, doc)]) == 0
    assert "warning" in capsys.readouterr().out


def test_list_experiments(capsys):
    assert cli.main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in ("spectrum-map", "detuning-map", "rabi-scan", "time-trace", "indist-scan",
                 "stark-scan", "purity", "cw-ratio", "dressed-info"):
        assert name in out


def test_run_writes_csv_and_metadata(tmp_path):
    assert cli.main(["run", write(tmp_path, SCEN), "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "stark.csv").read_text()
    head, *rows = text.splitlines()
    assert head.split(",")[:5] == ["delta_over_shift", "delta_ueV", "omega_cw_ueV",
                                   "I_total", "I_plus"]
    assert len(rows) == 3
    assert "\r" not in text
    for tok in rows[1].split(","):
        assert len(tok.replace("-", "").replace(".", "").lstrip("0").split("e")[0]) <= 9
    meta = json.loads((tmp_path / "o" / "stark.meta.json").read_text())
    assert meta["b_factor"] == 1.0 and meta["b_factor_squared"] == 1.0
    assert meta["tool_version"]
    assert meta["cascade"]["gamma_X"] == 1.32
    assert len(meta["grids"]["time_grids"]) == 3


def test_sweep_through_zero_drive(tmp_path):
    doc = with_(SCEN, experiment="indist-scan", cascade={"delta": -120.0},
                sweep={"variable": "omega_cw", "grid": [0, 20]}, settings={})
    assert cli.main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    first = (tmp_path / "stark.csv").read_text().splitlines()[1].split(",")
    assert first[3] == "nan"


def test_metadata_records_polaron(tmp_path):
    doc = with_(SCEN, phonon={"alpha": 0.004, "omega_b": 8.36, "temperature": 4.5},
                sweep={"variable": "delta_over_shift", "grid": [20]})
    cfg = cli.parse_scenario(doc)
    meta = cli.metadata(cfg)
    assert meta["b_factor"] == pytest.approx(0.8676, abs=1e-4)
    assert meta["b_factor_squared"] == pytest.approx(meta["b_factor"] ** 2)


def test_reruns_byte_identical(tmp_path):
    path = write(tmp_path, SCEN)
    for d in ("a", "b"):
        assert cli.main(["run", path, "--out", str(tmp_path / d)]) == 0
    for f in ("stark.csv", "stark.meta.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_parallel_matches_serial(tmp_path):
    path = write(tmp_path, SCEN)
    assert cli.main(["run", path, "--out", str(tmp_path / "s"), "--threads", "1"]) == 0
    assert cli.main(["run", path, "--out", str(tmp_path / "p"), "--threads", "3"]) == 0
    assert (tmp_path / "s" / "stark.csv").read_bytes() == (tmp_path / "p" / "stark.csv").read_bytes()


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("SIM_THREADS", "4")
    assert cli._threads(None) == 4
    assert cli._threads(2) == 2
    monkeypatch.setenv("SIM_THREADS", "many")
    with pytest.raises(cli.InputError):
        cli._threads(None)
    monkeypatch.delenv("SIM_THREADS")
    assert cli._threads(None) == 1
    with pytest.raises(cli.InputError):
        cli._threads(0)


def test_convergence_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise cli.ConvergenceError("grid not converged")
    monkeypatch.setattr(cli.ph, "indistinguishability", boom)
    assert cli.main(["run", write(tmp_path, SCEN), "--out", str(tmp_path)]) == 3
    assert "convergence" in capsys.readouterr().err


def test_dressed_info_prints_states(tmp_path, capsys):
    doc = {"schema_version": 1, "experiment": "dressed-info", "cascade": {"delta": 0},
           "sweep": {"variable": "omega_cw", "grid": [24]}}
    assert cli.main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "E+ = 12 ueV" in out and "E- = -12 ueV" in out
    assert "0.707107|XX> + 0.707107|XV>" in out


def test_time_trace_with_irf(tmp_path):
    doc = {"schema_version": 1, "experiment": "time-trace",
           "cascade": {"omega_cw": 18, "gamma_XX": 2.64},
           "sweep": {"variable": "time", "grid": {"start": 0, "stop": 1000, "num": 1001}},
           "settings": {"mode": "reduced", "initial": "XV", "irf_fwhm_ps": 100}}
    assert cli.main(["run", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "time-trace.csv").read_text().splitlines()
    assert lines[0].endswith("rho_XV_irf")
    assert len(lines) == 1002
    first = lines[1].split(",")
    assert float(first[3]) == 1.0


def test_rabi_scan_oscillates(tmp_path):
    doc = {"schema_version": 1, "experiment": "rabi-scan",
           "sweep": {"variable": "pulse_area", "grid": [0, math.pi, 2 * math.pi]}}
    cfg = cli.parse_scenario(doc)
    rows = cli.compute_rows(cfg)
    n = [r[2] for r in rows]
    assert n[0] < 1e-9 and n[1] > 0.99 and n[2] < 0.05


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dressedqd.cli", "validate", write(tmp_path, SCEN)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "ok" in r.stdout


def test_csv_format_helpers():
    assert cli._fmt(1 / 3) == "0.333333333"
    assert cli._fmt(float("nan")) == "nan"
    assert cli._fmt(math.inf) == "inf"
    assert cli._fmt(-0.0) == "0"
    assert cli.to_csv(["a"], [[1.0]]) == "a\n1\n"
