import json

import numpy as np
import pandas as pd
import pytest

from config.constants import APP_VERSION
from main import build_parser, main


def _write_metrics(path, rows):
    theta = np.sqrt(16.0 + np.arange(rows))
    pd.DataFrame({
        "n": np.arange(rows),
        "theta": theta,
        "delta": 0.01,
        "residual_s0": theta ** -2.0,
        "dV_s0": 0.01 * theta ** -9.0,
    }).to_csv(path, index=False)
    return path


def test_version(capsys):
    with pytest.raises(SystemExit) as excinfo:
        build_parser().parse_args(["--version"])
    assert excinfo.value.code == 0
    assert APP_VERSION in capsys.readouterr().out


def test_seed_must_be_unsigned_64_bit():
    parser = build_parser()
    assert parser.parse_args(["iterate", "--seed", str(2 ** 64 - 1)]).seed == 2 ** 64 - 1
    with pytest.raises(SystemExit):
        parser.parse_args(["iterate", "--seed", "-1"])


def test_report_writes_fits(tmp_path, capsys):
    metrics = _write_metrics(tmp_path / "metrics.csv", 5)
    out = tmp_path / "out"
    assert main(["report", str(metrics), "--out", str(out), "--quiet"]) == 0
    fits = pd.read_csv(out / "fits.csv")
    row = fits[fits["quantity"] == "dV"].iloc[0]
    assert row["fitted"] == pytest.approx(-9.0, abs=1e-6)
    assert row["reference"] == pytest.approx(-9.0)
    assert "residual" in capsys.readouterr().out


def test_report_on_single_row_is_input_error(tmp_path, capsys):
    metrics = _write_metrics(tmp_path / "metrics.csv", 1)
    assert main(["report", str(metrics), "--out", str(tmp_path / "out"), "--quiet"]) == 2
    assert "指标文件无法用于拟合" in capsys.readouterr().err


def test_bad_config_is_input_error(config_file, tmp_path):
    path = config_file("grid.n1 = many\n")
    assert main(["check", "--config", str(path), "--out", str(tmp_path / "out"), "--quiet"]) == 2
    assert main(["check", "--config", str(tmp_path / "missing.cfg"), "--quiet"]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    metrics = _write_metrics(tmp_path / "metrics.csv", 4)
    monkeypatch.setenv("CVS_MHD_OUT_DIR", str(tmp_path / "env_out"))
    assert main(["report", str(metrics), "--quiet"]) == 0
    assert (tmp_path / "env_out" / "fits.csv").is_file()


@pytest.mark.slow
def test_check_on_planar_sheet(config_file, tmp_path):
    path = config_file("scenario = planar\n")
    out = tmp_path / "out"
    code = main(["check", "--config", str(path), "--out", str(out), "--quiet", "--seed", "1"])
    assert code in (0, 1)
    checks = pd.read_csv(out / "checks.csv")
    assert list(checks.columns) == ["check", "passed", "value", "threshold", "detail"]
    assert len(checks) == 12


@pytest.mark.slow
def test_iterate_on_planar_sheet_is_deterministic(config_file, tmp_path):
    path = config_file("scenario = planar\niteration.n_max = 2\n")
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["iterate", "--config", str(path), "--out", str(out), "--quiet"]) == 0
        outputs.append(out)
    assert (outputs[0] / "metrics.csv").read_bytes() == (outputs[1] / "metrics.csv").read_bytes()
    metrics = pd.read_csv(outputs[0] / "metrics.csv")
    assert len(metrics) == 2
    assert metrics["residual_s0"].abs().max() <= 1e-12
    summary = json.loads((outputs[0] / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "converged"
    assert (outputs[0] / "plot_residual_s0.dat").is_file()
