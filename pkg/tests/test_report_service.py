import json
import math

import numpy as np
import pandas as pd
import pytest

from core.exceptions import ReportError
from core.report_service import (
    FIT_COLUMNS,
    ReportService,
    fit_metric_files,
    fit_metrics,
    load_metrics,
    monitor_kind,
)

THETAS = np.sqrt(16.0 + np.arange(6))


def _metrics_frame():
    delta = 0.01
    return pd.DataFrame({
        "n": np.arange(len(THETAS)),
        "theta": THETAS,
        "delta": delta,
        "V_s0": 3.0 * THETAS ** -2.0,
        "dV_s2": delta * THETAS ** -7.0,
        "residual_s0": 0.5 * THETAS ** -1.5,
    })


def test_monitor_kind():
    assert monitor_kind("V") == "iterate"
    assert monitor_kind("dV") == "increment"
    assert monitor_kind("e3") == "L1"
    assert monitor_kind("ebar4") == "L2"
    assert monitor_kind("etilde4") == "L3"
    assert monitor_kind("residual") is None


def test_fit_recovers_power_laws():
    fits = fit_metrics(_metrics_frame(), s0=4, alpha=8, source="m.csv")
    assert list(fits.columns) == FIT_COLUMNS
    by_name = {(r.quantity, r.s): r for r in fits.itertuples()}

    dv = by_name[("dV", 2)]
    assert dv.kind == "increment"
    assert dv.fitted == pytest.approx(-7.0, abs=1e-6)
    assert dv.reference == -7.0
    assert dv.difference == pytest.approx(0.0, abs=1e-6)

    assert by_name[("V", 0)].fitted == pytest.approx(-2.0, abs=1e-6)
    assert by_name[("V", 0)].reference == 0.0

    residual = by_name[("residual", 0)]
    assert residual.fitted == pytest.approx(-1.5, abs=1e-6)
    assert residual.kind == ""
    assert math.isnan(residual.reference)
    assert set(fits["points"]) == {len(THETAS)}


def test_fit_skips_leading_steps():
    frame = _metrics_frame()
    # 前两步偏离幂律，跳过后斜率不受影响
    frame.loc[:1, "dV_s2"] *= 50.0
    fits = fit_metrics(frame, s0=4, alpha=8, start=2)
    dv = fits[(fits["quantity"] == "dV") & (fits["s"] == 2)].iloc[0]
    assert dv.fitted == pytest.approx(-7.0, abs=1e-6)
    assert dv.points == len(THETAS) - 2

    # 剩余不足两行时退回全部行
    fits = fit_metrics(frame, s0=4, alpha=8, start=5)
    assert set(fits["points"]) == {len(THETAS)}


def test_load_metrics_rejects_single_row(tmp_path):
    path = tmp_path / "metrics.csv"
    _metrics_frame().head(1).to_csv(path, index=False)
    with pytest.raises(ReportError):
        load_metrics(path)


def test_load_metrics_requires_theta(tmp_path):
    path = tmp_path / "metrics.csv"
    _metrics_frame().drop(columns=["theta"]).to_csv(path, index=False)
    with pytest.raises(ReportError) as excinfo:
        load_metrics(path)
    assert excinfo.value.details["缺少"] == ["theta"]


def test_load_metrics_rejects_bad_entries(tmp_path):
    frame = _metrics_frame().astype({"V_s0": object})
    frame.loc[2, "V_s0"] = "abc"
    path = tmp_path / "metrics.csv"
    frame.to_csv(path, index=False)
    with pytest.raises(ReportError):
        load_metrics(path)
    with pytest.raises(ReportError):
        load_metrics(tmp_path / "missing.csv")


def test_fit_metric_files_concatenates(tmp_path):
    paths = []
    for name in ("metrics_a.csv", "metrics_b.csv"):
        path = tmp_path / name
        _metrics_frame().to_csv(path, index=False)
        paths.append(path)
    fits = fit_metric_files(paths, s0=4, alpha=8)
    assert list(fits["source"].unique()) == ["metrics_a.csv", "metrics_b.csv"]
    with pytest.raises(ReportError):
        fit_metric_files([], s0=4, alpha=8)


def test_formats_gate_outputs(tmp_path):
    service = ReportService(tmp_path / "out", formats=["dat"])
    assert service.write_table("t.csv", [{"a": 1.0}]) is None
    path = service.write_plot_data("curve", [1.0, 2.0], [3.0, 4.0], "theta", "residual")
    assert path.name == "plot_curve.dat"
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# theta residual"
    assert len(lines) == 3
    assert service.written == [path]


def test_table_uses_fixed_float_format(tmp_path):
    service = ReportService(tmp_path)
    path = service.write_table("t.csv", [{"a": 0.5, "b": 2}], columns=["a", "b"])
    assert path.read_text(encoding="utf-8").splitlines() == ["a,b", "5.000000000000e-01,2"]


def _summary():
    return {
        "command": "iterate",
        "scenario": "planar",
        "seed": 0,
        "status": "converged",
        "settings": {"theta0": 4.0, "n_max": 3, "s_list": [0], "s0": 4, "alpha": 8, "s1": 13},
        "convergence": {
            "converged": True, "steps": 3, "residual_initial": 1.0, "residual_final": float("nan"),
            "residual_ratio": 0.0, "residual_slope": np.float64(-2.0), "increment_slopes": {},
            "reference_slopes": {}, "diverged": False,
        },
        "monitor_references": {},
        "fits": [],
        "wall_time": 0.5,
    }


def test_summary_is_validated_and_sanitised(tmp_path):
    service = ReportService(tmp_path)
    path = service.write_summary(_summary())
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["convergence"]["residual_final"] is None
    assert data["convergence"]["residual_slope"] == -2.0

    broken = _summary()
    broken["status"] = "finished"
    with pytest.raises(ReportError):
        service.write_summary(broken)
