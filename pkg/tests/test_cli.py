import json
import os

import pytest

from screened_landau.cli import main


def _run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *argv])


def test_penrose_writes_report_and_config_echo(tmp_path, capsys):
    assert _run(tmp_path, "penrose", "--grid", "24") == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["margin"] > 0
    assert {"argmin", "tail_certificate", "grid_trace"} <= set(report)
    assert "penrose.n = 24" in (tmp_path / "effective_config.txt").read_text()
    assert json.loads(capsys.readouterr().out)["exit_code"] == 0


def test_outputs_are_byte_identical_across_worker_counts(tmp_path):
    args = ["kernel-decay", "--t-list", "1,2,3,4,5,6,7,8"]
    cfg = tmp_path / "k.cfg"
    cfg.write_text("[solver]\nt_max = 8.0\nsteps = 80\nmodes = 64\n")
    out = tmp_path / "out"
    names = ("decay.csv", "decay.json", "effective_config.txt")
    snapshots = []
    for threads in ("1", "2"):
        assert main(["--config", str(cfg), "--threads", threads, "--out-dir", str(out), *args]) == 0
        snapshots.append([(out / n).read_bytes() for n in names])
    assert snapshots[0] == snapshots[1]


def test_config_errors_exit_4(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("equilibrium.dimension = 3\nexperiment = nonlinear-evolve\n")
    assert main(["--config", str(cfg), "--out-dir", str(tmp_path), "penrose"]) == 4
    cfg.write_text("[equilibrium]\ndimension = 3\n")
    assert main(["--config", str(cfg), "--out-dir", str(tmp_path), "nonlinear-evolve"]) == 4
    assert "nonlinear grid path supports d in {1, 2}" in capsys.readouterr().err


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_leaves_no_files(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    try:
        assert main(["--out-dir", str(locked), "penrose", "--grid", "16"]) == 4
        assert list(locked.iterdir()) == []
    finally:
        locked.chmod(0o700)


def test_missing_output_root_is_clean_error(tmp_path):
    target = tmp_path / "file"
    target.write_text("x")
    assert main(["--out-dir", str(target / "sub"), "penrose", "--grid", "16"]) == 4
    assert target.read_text() == "x"


def test_nonlinear_and_characteristics_round_trip(tmp_path):
    cfg = tmp_path / "nl.cfg"
    cfg.write_text("[equilibrium]\ndimension = 1\n[domain]\nL = 48.0\nnx = 48\nnv = 48\n"
                   "[initial]\namplitude = 1e-3\nsigma_x = 2.0\n[solver]\nt_max = 2.0\nsteps = 40\n")
    out = tmp_path / "nl"
    assert main(["--config", str(cfg), "--out-dir", str(out), "nonlinear-evolve", "--twin"]) == 0
    mon = json.loads((out / "monitor.json").read_text())
    assert {"epsilon", "N_of_t", "breach_time", "picard_residuals"} <= set(mon)
    assert max(mon["twin_relative_l2"]) < 1e-3
    lines = (out / "density.csv").read_text().splitlines()
    assert lines[0] == "t,x,rho" and len(lines) == 1 + 41 * 48
    flow = tmp_path / "flow"
    assert main(["--config", str(cfg), "--out-dir", str(flow), "characteristics", "--grid", "4:3",
                 "--t", "2"]) == 0
    rows = (flow / "flowmap.csv").read_text().splitlines()
    assert rows[0] == "x,v,Yx,Wv,detPsi" and len(rows) == 13


def test_linear_field_history_feeds_characteristics(tmp_path):
    cfg = tmp_path / "l.cfg"
    cfg.write_text("[solver]\nt_max = 4.0\nsteps = 40\nmodes = 128\n")
    out = tmp_path / "lin"
    assert main(["--config", str(cfg), "--out-dir", str(out), "linear-evolve", "--t-list", "1,2,3,4",
                 "--field-history-out", "fh.csv", "--dt-field", "1.0"]) == 0
    assert "skipped" in json.loads((out / "decay.json").read_text())
    ch = tmp_path / "ch"
    assert main(["--config", str(cfg), "--out-dir", str(ch), "characteristics", "--field-history",
                 str(out / "fh.csv"), "--s", "1", "--t", "3", "--grid", "3:2"]) == 0
    rows = (ch / "flowmap.csv").read_text().splitlines()
    assert rows[0].startswith("x1,x2,x3,v1,v2,v3,Yx1") and rows[0].endswith("detPsi") and len(rows) == 7


def test_accept_subset(tmp_path, capsys):
    assert _run(tmp_path, "accept", "--only", "2,6") == 0
    out = capsys.readouterr().out
    assert "criterion  2 PASS" in out and "criterion  6 PASS" in out
    assert [r["number"] for r in json.loads((tmp_path / "acceptance.json").read_text())] == [2, 6]
