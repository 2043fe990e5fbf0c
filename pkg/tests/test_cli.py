import json

import numpy as np
import pytest

from wemig.cli import main
from wemig.core import read_container

SMALL = """\
[scene]
nx = 33
nz = 31
x0 = -320
points = 0 400 1
[acquisition]
nt = 200
"""


@pytest.fixture
def small_run(tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    return cfg, tmp_path / "out"


def _manifest(out, name):
    return json.loads((out / f"manifest_{name}.json").read_text())


def test_dottest_writes_table_and_manifest(small_run):
    cfg, out = small_run
    assert main(["dottest", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "dottest.csv").read_text().splitlines()
    assert lines[0] == "pair,relative_residual" and len(lines) > 1
    man = _manifest(out, "dottest")
    assert man["exit_code"] == 0 and man["subcommand"] == "dottest"
    assert all(v < 1e-6 for k, v in man["summary"].items() if k.startswith("dot_"))


def test_model_born_migrate_focuses(small_run):
    cfg, out = small_run
    common = ["--config", str(cfg), "--out", str(out)]
    assert main(["model", *common]) == 0
    assert main(["born", *common]) == 0
    assert main(["migrate", *common]) == 0
    summary = _manifest(out, "migrate")["summary"]
    assert abs(summary["peak_offset_x_cells"]) <= 1 and abs(summary["peak_offset_z_cells"]) <= 1
    man = _manifest(out, "born")
    assert str(out / "data.wgrid") in man["outputs"]
    img = read_container(out / "image.wgrid")
    assert img.shape == (33, 31) and np.all(np.isfinite(img.values))


def test_angle_guard_and_missing_data(small_run, capsys):
    cfg, out = small_run
    assert main(["angle", "--config", str(cfg), "--out", str(out)]) == 4
    assert "I/O error" in capsys.readouterr().err
    assert main(["angle", "--config", str(cfg), "--out", str(out), "--pmax", "3e-4"]) == 2
    assert "aperture guard" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scene]\nnx = many\n")
    assert main(["model", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "nx" in capsys.readouterr().err


def test_export_is_idempotent_and_checks_slices(small_run):
    cfg, out = small_run
    assert main(["model", "--config", str(cfg), "--out", str(out)]) == 0
    a, b = out / "a.csv", out / "b.csv"
    assert main(["export", str(out / "model.wgrid"), str(a), "--slice", "x=16", "--out", str(out)]) == 0
    assert main(["export", str(out / "model.wgrid"), str(b), "--slice", "x=16", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 32
    assert main(["export", str(out / "model.wgrid"), str(a), "--slice", "x=33", "--out", str(out)]) == 2
    assert main(["export", str(out / "model.wgrid"), str(a), "--slice", "q=1", "--out", str(out)]) == 2


def test_thread_override_in_manifest(small_run, monkeypatch):
    cfg, out = small_run
    monkeypatch.setenv("WEMIG_THREADS", "3")
    assert main(["model", "--config", str(cfg), "--out", str(out)]) == 0
    assert _manifest(out, "model")["threads"] == 3
    monkeypatch.setenv("WEMIG_THREADS", "zero")
    assert main(["model", "--config", str(cfg), "--out", str(out)]) == 2


def test_rays_report_small_drift(small_run):
    cfg, out = small_run
    assert main(["rays", "--config", str(cfg), "--out", str(out), "--n-rays", "3"]) == 0
    summary = _manifest(out, "rays")["summary"]
    assert summary["max_relative_drift"] < 1e-6
    assert summary["max_tracer_gap_m"] < 1e-6
    assert summary["n_events"] > 0
    assert (out / "rays.csv").read_text().startswith("point,ray,x,z,t")


def test_annihilate_scan_writes_table(small_run, capsys):
    cfg, out = small_run
    common = ["--config", str(cfg), "--out", str(out)]
    assert main(["born", *common]) == 0
    assert main(["annihilate", *common, "--scan", "0.95:1.05:0.05", "--residual"]) == 0
    rows = (out / "scan.csv").read_text().splitlines()
    assert rows[0] == "scale,J" and len(rows) == 4
    assert "argmin" in capsys.readouterr().out
    summary = _manifest(out, "annihilate")["summary"]
    assert 0 <= summary["residual_ratio"] < 1
    assert (out / "residual.wgrid").is_file()
