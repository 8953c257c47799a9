"""
报告服务 - 指标表、摘要 JSON、绘图数据的写出与幂律拟合

输出格式：
- CSV：pandas 写出，浮点格式 %.12e，列头固定（见 docs/USER_MANUAL.md）
- JSON：indent=2、键排序，写出前按摘要 schema 校验；墙钟时间只出现在这里
- 绘图数据：两列空白分隔的 ASCII，首行为 ``#`` 列头
"""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import jsonschema
import numpy as np
import pandas as pd

from config.constants import (
    CSV_FLOAT_FORMAT,
    METRICS_CSV,
    OUTPUT_FORMATS,
    PLOT_DATA_PREFIX,
    SUMMARY_JSON,
)
from core.exceptions import ReportError
from core.nash_moser import IterationResult, IterationSettings, fit_exponent, monitor_exponents

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# 指标列名 <量>_s<阶数>
METRIC_COLUMN = re.compile(r"^(?P<quantity>.+)_s(?P<s>\d+)$")

# 量 → 参考曲线类别
_MONITOR_KIND = {
    "V": "iterate",
    "Phi": "iterate",
    "phi": "iterate",
    "SV": "iterate",
    "V_high": "high",
    "V_modified": "modified",
    "E": "accumulated",
    "Ebar": "accumulated",
    "Etilde": "accumulated",
    "f": "rhs",
    "g": "rhs",
    "h": "rhs",
    "dV": "increment",
    "dV_dot": "increment",
    "dPhi": "increment",
    "dphi": "increment",
}

# 参考界中带 Δ 因子的类别，拟合前先除以 Δ
DELTA_SCALED = ("rhs", "increment", "L1", "L2", "L3")

FIT_COLUMNS = ["source", "quantity", "s", "kind", "points", "fitted", "reference", "difference"]

SUMMARY_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["command", "scenario", "seed", "status", "settings", "convergence",
                 "monitor_references", "fits", "wall_time"],
    "properties": {
        "command": {"type": "string"},
        "scenario": {"type": "string"},
        "seed": {"type": ["integer", "null"]},
        "status": {"type": "string", "enum": ["converged", "not_converged", "diverged"]},
        "settings": {
            "type": "object",
            "required": ["theta0", "n_max", "s_list", "s0", "alpha", "s1"],
        },
        "convergence": {
            "type": "object",
            "required": ["converged", "steps", "residual_initial", "residual_final",
                         "residual_ratio", "residual_slope", "increment_slopes",
                         "reference_slopes", "diverged"],
            "properties": {
                "converged": {"type": "boolean"},
                "diverged": {"type": "boolean"},
                "steps": {"type": "integer", "minimum": 0},
            },
        },
        "monitor_references": {"type": "object"},
        "fits": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["quantity", "s", "kind", "fitted", "reference"],
                "properties": {
                    "quantity": {"type": "string"},
                    "s": {"type": "integer"},
                    "fitted": {"type": ["number", "null"]},
                    "reference": {"type": ["number", "null"]},
                },
            },
        },
        "wall_time": {"type": "number", "minimum": 0},
        "step_wall_times": {"type": "array", "items": {"type": "number"}},
        "config": {"type": "object"},
    },
}


def monitor_kind(quantity: str) -> Optional[str]:
    """量名对应的参考曲线类别；无参考时返回 None"""
    if quantity in _MONITOR_KIND:
        return _MONITOR_KIND[quantity]
    for prefix, kind in (("etilde", "L3"), ("ebar", "L2"), ("e", "L1")):
        if re.fullmatch(rf"{prefix}\d", quantity):
            return kind
    return None


def _jsonable(value: Any) -> Any:
    """nan/inf → null，numpy 标量 → Python 数"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def validate_summary(summary: Dict[str, Any]) -> None:
    validator = jsonschema.Draft7Validator(SUMMARY_SCHEMA)
    problems = [f"{'.'.join(str(p) for p in e.path) or '<root>'}: {e.message}"
                for e in validator.iter_errors(summary)]
    if problems:
        raise ReportError("摘要不符合 schema", {"问题": problems})


# ===== 拟合 =====

def load_metrics(path: PathLike) -> pd.DataFrame:
    """
    读取指标 CSV 并检查可用于拟合

    Raises:
        ReportError: 文件缺失、无法解析、缺少 theta/delta 列或少于两行
    """
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"指标文件不存在: {path}")
    try:
        frame = pd.read_csv(path, comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ReportError(f"指标文件无法解析: {path}", {"原因": str(e)}) from e

    missing = [c for c in ("theta", "delta") if c not in frame.columns]
    if missing:
        raise ReportError(f"指标文件缺少必要列: {path}", {"缺少": missing})
    if len(frame) < 2:
        raise ReportError(f"指标文件只有 {len(frame)} 行记录，无法做回归拟合: {path}")
    try:
        frame = frame.apply(pd.to_numeric)
    except (ValueError, TypeError) as e:
        raise ReportError(f"指标文件含非数值条目: {path}", {"原因": str(e)}) from e
    if not np.all(np.isfinite(frame["theta"])) or np.any(frame["theta"] <= 0):
        raise ReportError(f"θ 列必须为有限正数: {path}")
    return frame


def fit_metrics(frame: pd.DataFrame, s0: float, alpha: float, source: str = "",
                start: int = 0) -> pd.DataFrame:
    """
    逐量逐阶最小二乘拟合 log‖·‖ 对 log θ 的斜率，并与参考指数并列

    带 Δ 因子的量先除以 Δ；无参考的量（残差等）参考列为 nan。
    只用 n ≥ start 的行，剩余不足两行时用全部行。
    """
    if start > 0 and "n" in frame.columns and int(np.sum(frame["n"] >= start)) >= 2:
        frame = frame[frame["n"] >= start]
    rows = []
    theta = frame["theta"].to_numpy(dtype=float)
    delta = frame["delta"].to_numpy(dtype=float)
    for column in frame.columns:
        match = METRIC_COLUMN.match(column)
        if match is None:
            continue
        quantity, s = match["quantity"], int(match["s"])
        kind = monitor_kind(quantity)
        values = frame[column].to_numpy(dtype=float)
        if kind in DELTA_SCALED:
            values = values / delta
        reference = monitor_exponents(s, s0, alpha)[kind] if kind else math.nan
        fitted = fit_exponent(theta, values)
        rows.append({
            "source": source,
            "quantity": quantity,
            "s": s,
            "kind": kind or "",
            "points": int(np.count_nonzero(np.isfinite(values) & (values > 0))),
            "fitted": fitted,
            "reference": reference,
            "difference": fitted - reference,
        })
    return pd.DataFrame(rows, columns=FIT_COLUMNS)


def fit_metric_files(paths: Sequence[PathLike], s0: float, alpha: float,
                     start: int = 0) -> pd.DataFrame:
    """对每个指标文件做拟合并合并为一张表"""
    if not paths:
        raise ReportError("未提供指标文件")
    tables = []
    for path in paths:
        frame = load_metrics(path)
        tables.append(fit_metrics(frame, s0, alpha, source=Path(path).name, start=start))
        logger.info(f"已拟合指标文件: {path} ({len(frame)} 行)")
    return pd.concat(tables, ignore_index=True)


# ===== 写出 =====

@dataclass
class ReportService:
    """把各子命令的结果写到输出目录"""
    out_dir: Path
    formats: Sequence[str] = field(default_factory=lambda: list(OUTPUT_FORMATS))
    written: List[Path] = field(default_factory=list)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _enabled(self, fmt: str) -> bool:
        return fmt in self.formats

    def write_table(self, name: str, rows: Union[pd.DataFrame, Iterable[Dict[str, Any]]],
                    columns: Optional[Sequence[str]] = None) -> Optional[Path]:
        """写 CSV 表；未启用 csv 格式时跳过"""
        if not self._enabled("csv"):
            return None
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        self.written.append(path)
        logger.info(f"已写出表格: {path} ({len(frame)} 行)")
        return path

    def write_plot_data(self, name: str, x: Sequence[float], y: Sequence[float],
                        x_label: str, y_label: str) -> Optional[Path]:
        """写两列绘图数据"""
        if not self._enabled("dat"):
            return None
        path = self.out_dir / f"{PLOT_DATA_PREFIX}{name}.dat"
        data = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        np.savetxt(path, data, fmt=CSV_FLOAT_FORMAT, header=f"{x_label} {y_label}", comments="# ")
        self.written.append(path)
        logger.debug(f"已写出绘图数据: {path}")
        return path

    def write_summary(self, summary: Dict[str, Any], name: str = SUMMARY_JSON) -> Optional[Path]:
        """校验并写出摘要 JSON"""
        if not self._enabled("json"):
            return None
        clean = _jsonable(summary)
        validate_summary(clean)
        path = self.out_dir / name
        with open(path, "w", encoding="utf-8") as f:
            json.dump(clean, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        self.written.append(path)
        logger.info(f"已写出摘要: {path}")
        return path

    # ----- check -----

    def write_checks(self, suite_report) -> Optional[Path]:
        return self.write_table("checks.csv", suite_report.rows(),
                                columns=["check", "passed", "value", "threshold", "detail"])

    # ----- linear -----

    def write_linear(self, results: "LinearResults") -> List[Path]:
        """写出线性研究的各张表与能量曲线"""
        before = len(self.written)
        self.write_table("manufactured.csv", [r.as_row() for r in results.manufactured.rows],
                         columns=["n", "h", "error_W", "error_phi", "gap", "gap_fd", "bc_residual",
                                  "order_W", "order_phi", "order_gap_fd"])
        self.write_table("energy.csv", results.energy.rows(),
                         columns=["s", "mu", "lhs", "rhs_core", "C0"])
        self.write_table("div_h.csv", [r.as_row() for r in results.divergence],
                         columns=["n", "h", "div_l2", "div_max", "order"])
        if results.stability is not None:
            self.write_plot_data("stability_energy", results.stability.t, results.stability.energy,
                                 "t", "energy")
        if results.linearization is not None:
            self.write_table("linearization.csv", results.linearization.rows(),
                             columns=["config", "step", "error", "slope"])
        return self.written[before:]

    # ----- iterate -----

    def write_iteration(self, result: IterationResult, settings: IterationSettings,
                        scenario: str, seed: Optional[int], wall_time: float,
                        config: Optional[Dict[str, Any]] = None) -> List[Path]:
        """
        写出每步指标、残差-θ 曲线与摘要

        发散时 result 为 IterationDiverged 携带的部分历史，已完成步骤照常写出。
        """
        before = len(self.written)
        records = result.state.records
        metrics = pd.DataFrame([r.as_row() for r in records])
        self.write_table(METRICS_CSV, metrics)

        thetas = [r.theta for r in records]
        for s in settings.norm_orders:
            self.write_plot_data(f"residual_s{s}", thetas, [r.norms["residual"][s] for r in records],
                                 "theta", f"residual_s{s}")
            self.write_plot_data(f"dV_s{s}", thetas, [r.norms["dV"][s] for r in records],
                                 "theta", f"dV_s{s}")

        fits = (fit_metrics(metrics, settings.s0, settings.alpha, start=settings.fit_start)
                if len(records) >= 2 else pd.DataFrame(columns=FIT_COLUMNS))
        report = result.report
        if report.diverged:
            status = "diverged"
        else:
            status = "converged" if report.converged else "not_converged"
        summary = {
            "command": "iterate",
            "scenario": scenario,
            "seed": seed,
            "status": status,
            "settings": {
                "theta0": settings.theta0,
                "n_max": settings.n_max,
                "s_list": list(settings.s_list),
                "s0": settings.s0,
                "alpha": settings.alpha,
                "s1": settings.s1,
                "fit_start": settings.fit_start,
            },
            "convergence": report.as_dict(),
            "initial_residual": {str(s): v for s, v in result.initial_residual.items()},
            "monitor_references": {str(s): monitor_exponents(s, settings.s0, settings.alpha)
                                   for s in settings.norm_orders},
            "fits": fits.drop(columns=["source"]).to_dict(orient="records"),
            "wall_time": wall_time,
            "step_wall_times": [r.wall_time for r in records],
        }
        if config is not None:
            summary["config"] = config
        self.write_summary(summary)
        return self.written[before:]

    # ----- report -----

    def write_fits(self, fits: pd.DataFrame, name: str = "fits.csv") -> Optional[Path]:
        return self.write_table(name, fits)


@dataclass
class LinearResults:
    """linear 子命令的全部结果"""
    manufactured: Any
    energy: Any
    divergence: List[Any]
    stability: Any = None
    linearization: Any = None
