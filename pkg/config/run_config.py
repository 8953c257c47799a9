"""
运行配置 - 点号键文本格式的解析、序列化与结构校验

文件格式为扁平的 ``key = value`` 文本，节名以点号分隔（``grid.n1 = 64``），
``#`` 开头为注释，列表与背景态向量写成逗号分隔的数值。
优先级：命令行参数 > 环境变量 > 配置文件 > 场景预设 > 默认值。
"""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import jsonschema

from config.constants import (
    DEFAULT_ALPHA,
    DEFAULT_BACKGROUND_MINUS,
    DEFAULT_BACKGROUND_PLUS,
    DEFAULT_CFL,
    DEFAULT_COLLAR_FRACTION,
    DEFAULT_ENTROPY_SCALE,
    DEFAULT_FIT_START,
    DEFAULT_GAMMA,
    DEFAULT_KAPPA_MIN,
    DEFAULT_N_MAX,
    DEFAULT_N_MODES,
    DEFAULT_PERTURBATION_CENTER,
    DEFAULT_PERTURBATION_WIDTH,
    DEFAULT_S0,
    DEFAULT_S1,
    DEFAULT_S_LIST,
    DEFAULT_SCENARIO,
    DEFAULT_SPECTRAL_DECAY,
    DEFAULT_THETA0,
    DEFAULT_TOL_PARALLEL,
    DEFAULT_X1_MAX,
    DIVERGENCE_PATIENCE,
    ENV_OUT_DIR,
    OUTPUT_FORMATS,
    SCENARIO_NAMES,
    TOL_CONSTRAINT,
    TOL_TELESCOPING,
    TWO_PI,
    scenario_preset,
)
from core.exceptions import ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class GridConfig:
    """空间网格"""
    n1: int = 64
    n2: int = 32
    n3: int = 1
    x1_max: float = DEFAULT_X1_MAX
    L2: float = TWO_PI
    L3: float = TWO_PI


@dataclass
class TimeConfig:
    """时间区间与 CFL 数"""
    T: float = 0.2
    cfl: float = DEFAULT_CFL


@dataclass
class EosConfig:
    """状态方程"""
    gamma: float = DEFAULT_GAMMA
    reference_entropy_scale: float = DEFAULT_ENTROPY_SCALE


@dataclass
class BackgroundConfig:
    """平面电流-涡面的两侧常数态"""
    plus: List[float] = field(default_factory=lambda: list(DEFAULT_BACKGROUND_PLUS))
    minus: List[float] = field(default_factory=lambda: list(DEFAULT_BACKGROUND_MINUS))


@dataclass
class PerturbationConfig:
    """初始扰动：x1 方向高斯包络乘切向 Fourier 模之和（mode2 的 1..n_modes 倍频）"""
    amplitude: float = 1e-3
    mode2: int = 1
    mode3: int = 0
    center: float = DEFAULT_PERTURBATION_CENTER
    width: float = DEFAULT_PERTURBATION_WIDTH
    n_modes: int = DEFAULT_N_MODES
    spectral_decay: float = DEFAULT_SPECTRAL_DECAY
    front_amplitude: float = 0.0
    compat_order: int = 1
    seed: int = 0


@dataclass
class IterationConfig:
    """Nash-Moser 迭代参数"""
    theta0: float = DEFAULT_THETA0
    n_max: int = DEFAULT_N_MAX
    s_list: List[int] = field(default_factory=lambda: list(DEFAULT_S_LIST))
    s0: int = DEFAULT_S0
    alpha: int = DEFAULT_ALPHA
    s1: int = DEFAULT_S1
    fit_start: int = DEFAULT_FIT_START


@dataclass
class ToleranceConfig:
    """各类容差"""
    parallel: float = DEFAULT_TOL_PARALLEL
    kappa_min: float = DEFAULT_KAPPA_MIN
    collar_fraction: float = DEFAULT_COLLAR_FRACTION
    constraint: float = TOL_CONSTRAINT
    telescoping: float = TOL_TELESCOPING
    divergence_patience: int = DIVERGENCE_PATIENCE


@dataclass
class OutputConfig:
    """输出目录与格式"""
    directory: str = ""
    formats: List[str] = field(default_factory=lambda: list(OUTPUT_FORMATS))


_SECTIONS = {
    "grid": GridConfig,
    "time": TimeConfig,
    "eos": EosConfig,
    "background": BackgroundConfig,
    "perturbation": PerturbationConfig,
    "iteration": IterationConfig,
    "tolerance": ToleranceConfig,
    "output": OutputConfig,
}


def _vector8() -> Dict[str, Any]:
    return {"type": "array", "items": {"type": "number"}, "minItems": 8, "maxItems": 8}


CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": list(_SECTIONS) + ["scenario"],
    "properties": {
        "scenario": {"type": "string", "enum": list(SCENARIO_NAMES)},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n1": {"type": "integer", "minimum": 1},
                "n2": {"type": "integer", "minimum": 1},
                "n3": {"type": "integer", "minimum": 1},
                "x1_max": {"type": "number", "exclusiveMinimum": 0},
                "L2": {"type": "number", "exclusiveMinimum": 0},
                "L3": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "eos": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": {"type": "number", "exclusiveMinimum": 1},
                "reference_entropy_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "background": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"plus": _vector8(), "minus": _vector8()},
        },
        "perturbation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitude": {"type": "number", "minimum": 0},
                "mode2": {"type": "integer", "minimum": 0},
                "mode3": {"type": "integer", "minimum": 0},
                "center": {"type": "number", "minimum": 0},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "n_modes": {"type": "integer", "minimum": 1},
                "spectral_decay": {"type": "number", "minimum": 0},
                "front_amplitude": {"type": "number", "minimum": 0},
                "compat_order": {"type": "integer", "minimum": 0, "maximum": 2},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "iteration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta0": {"type": "number"},
                "n_max": {"type": "integer", "minimum": 0},
                "s_list": {"type": "array", "items": {"type": "integer", "minimum": 0},
                           "minItems": 1},
                "s0": {"type": "integer", "minimum": 0},
                "alpha": {"type": "integer", "minimum": 0},
                "s1": {"type": "integer", "minimum": 0},
                "fit_start": {"type": "integer", "minimum": 0},
            },
        },
        "tolerance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "parallel": {"type": "number", "exclusiveMinimum": 0},
                "kappa_min": {"type": "number", "exclusiveMinimum": 0},
                "collar_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "constraint": {"type": "number", "exclusiveMinimum": 0},
                "telescoping": {"type": "number", "exclusiveMinimum": 0},
                "divergence_patience": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array",
                            "items": {"type": "string", "enum": list(OUTPUT_FORMATS)}},
            },
        },
    },
}


@dataclass
class RunConfig:
    """完整运行配置"""
    scenario: str = DEFAULT_SCENARIO
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    eos: EosConfig = field(default_factory=EosConfig)
    background: BackgroundConfig = field(default_factory=BackgroundConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    iteration: IterationConfig = field(default_factory=IterationConfig)
    tolerance: ToleranceConfig = field(default_factory=ToleranceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> Dict[str, Any]:
        """转换为嵌套字典"""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """从嵌套字典创建，先做结构校验"""
        validate_schema(data)
        kwargs: Dict[str, Any] = {"scenario": data["scenario"]}
        for name, section_cls in _SECTIONS.items():
            kwargs[name] = section_cls(**data.get(name, {}))
        return cls(**kwargs)

    def to_text(self) -> str:
        """序列化为点号键文本"""
        lines = [
            "# cvs-mhd-lab 运行配置",
            f"scenario = {self.scenario}",
        ]
        for section, values in self.to_dict().items():
            if section == "scenario":
                continue
            lines.append("")
            lines.append(f"# [{section}]")
            for key, value in values.items():
                lines.append(f"{section}.{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        """解析点号键文本：默认值 < 场景预设 < 显式键"""
        raw = _parse_lines(text.splitlines())
        scenario = raw.pop("scenario", DEFAULT_SCENARIO)
        if scenario not in SCENARIO_NAMES:
            raise ConfigError(f"未知场景: {scenario}", {"可选": list(SCENARIO_NAMES)})

        flat = _flatten(cls(scenario=scenario).to_dict())
        flat.update(scenario_preset(scenario))
        for key, value in raw.items():
            flat[key] = _coerce(key, value)
        flat["scenario"] = scenario
        return cls.from_dict(_nest(flat))

    @classmethod
    def load(cls, path: PathLike) -> "RunConfig":
        """从文件加载"""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"配置文件不存在: {path}")
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"无法读取配置文件: {path}", {"原因": str(e)}) from e
        config = cls.from_text(text)
        logger.info(f"已加载配置: {path} (场景 {config.scenario})")
        return config

    def save(self, path: PathLike) -> None:
        """保存到文件"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        logger.debug(f"配置已保存: {path}")


def validate_schema(data: Dict[str, Any]) -> None:
    """JSON Schema 结构校验，失败时列出全部问题"""
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    problems = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
    if problems:
        items = [f"{'.'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in problems]
        raise ConfigError("配置结构校验失败", {"问题": items})


def apply_environment(config: RunConfig) -> RunConfig:
    """应用环境变量覆盖（CVS_MHD_OUT_DIR）"""
    out_dir = os.environ.get(ENV_OUT_DIR)
    if out_dir:
        config.output.directory = out_dir
        logger.debug(f"输出目录由环境变量覆盖: {out_dir}")
    return config


def load_run_config(path: Optional[PathLike] = None) -> RunConfig:
    """加载配置文件（缺省时使用默认配置），应用环境变量并做语义校验"""
    from core.validator import validate_run_config

    config = RunConfig.load(path) if path else RunConfig.from_text("")
    config = apply_environment(config)
    for result in validate_run_config(config):
        logger.warning(str(result))
    return config


def _parse_lines(lines) -> Dict[str, str]:
    """逐行解析 key = value，忽略空行与注释，去掉成对引号"""
    values: Dict[str, str] = {}
    for line_number, raw_line in enumerate(lines, start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"第 {line_number} 行缺少 '='", {"内容": line})

        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in ('"', "'"):
            value = value[1:-1]
        values[key] = value
    return values


def _property_schema(key: str) -> Dict[str, Any]:
    section, _, name = key.partition(".")
    section_schema = CONFIG_SCHEMA["properties"].get(section)
    if not name or section_schema is None or name not in section_schema["properties"]:
        raise ConfigError(f"未知配置项: {key}")
    return section_schema["properties"][name]


def _coerce_scalar(key: str, raw: str, type_name: str) -> Any:
    try:
        if type_name == "integer":
            return int(raw)
        if type_name == "number":
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"配置项 {key} 的取值无法解析: {raw}") from e
    return raw


def _coerce(key: str, raw: str) -> Any:
    """按 schema 声明的类型转换文本值"""
    schema = _property_schema(key)
    if schema["type"] == "array":
        item_type = schema["items"]["type"]
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return [_coerce_scalar(key, p, item_type) for p in parts]
    return _coerce_scalar(key, raw, schema["type"])


def _format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _flatten(data: Dict[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for section, values in data.items():
        if isinstance(values, dict):
            for key, value in values.items():
                flat[f"{section}.{key}"] = value
    return flat


def _nest(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    scenario = flat.pop("scenario", None)
    for key, value in flat.items():
        section, _, name = key.partition(".")
        nested.setdefault(section, {})[name] = value
    if scenario is not None:
        nested["scenario"] = scenario
    return nested
