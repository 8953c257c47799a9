"""
运行配置校验器 - 结构校验之后的语义检查
"""
from dataclasses import dataclass
from enum import Enum
from typing import List

import numpy as np

from config.run_config import RunConfig
from core.eos_state import Eos, Grid, MhdState
from core.exceptions import CvsLabError, ConfigError
from core.function_spaces import resolution_cap
from core.mhd_system import lambda_pair, rh_residual, stability_margin


class ValidationLevel(Enum):
    """校验结果级别"""
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass
class ValidationResult:
    """校验结果"""
    level: ValidationLevel
    field: str
    message: str

    def __str__(self) -> str:
        level_str = {
            ValidationLevel.ERROR: "错误",
            ValidationLevel.WARNING: "警告",
            ValidationLevel.INFO: "信息"
        }.get(self.level, "未知")
        return f"[{level_str}] {self.field}: {self.message}"


class RunConfigValidator:
    """RunConfig 语义校验器"""

    CONTACT_TOL = 1e-12

    def __init__(self):
        self.results: List[ValidationResult] = []

    def validate(self, config: RunConfig) -> List[ValidationResult]:
        """
        执行完整校验

        Returns:
            校验结果列表
        """
        self.results = []
        eos = self._validate_eos(config)
        self._validate_grid(config)
        if eos is not None:
            states = self._validate_states(config, eos)
            if states is not None:
                self._validate_sheet(config, *states)
        self._validate_iteration(config)
        return self.results

    def has_errors(self) -> bool:
        return any(r.level == ValidationLevel.ERROR for r in self.results)

    def get_errors(self) -> List[ValidationResult]:
        return [r for r in self.results if r.level == ValidationLevel.ERROR]

    def get_warnings(self) -> List[ValidationResult]:
        return [r for r in self.results if r.level == ValidationLevel.WARNING]

    def get_summary(self) -> str:
        """获取校验结果摘要"""
        errors = len(self.get_errors())
        warnings = len(self.get_warnings())
        if errors == 0 and warnings == 0:
            return "配置有效"
        elif errors == 0:
            return f"配置有效，但有 {warnings} 个警告"
        return f"配置无效: {errors} 个错误, {warnings} 个警告"

    def _add_result(self, level: ValidationLevel, field: str, message: str):
        self.results.append(ValidationResult(level, field, message))

    def _validate_eos(self, config: RunConfig):
        gamma = config.eos.gamma
        if not gamma > 1.0:
            self._add_result(ValidationLevel.ERROR, "eos.gamma", f"γ 必须大于 1，当前为: {gamma}")
            return None
        try:
            return Eos(gamma, config.eos.reference_entropy_scale)
        except CvsLabError as e:
            self._add_result(ValidationLevel.ERROR, "eos", str(e))
            return None

    def _validate_grid(self, config: RunConfig):
        g = config.grid
        for name in ("n1", "n2", "n3"):
            if getattr(g, name) < 1:
                self._add_result(ValidationLevel.ERROR, f"grid.{name}", "网格数必须 ≥ 1")
        if g.n2 % 2 or (g.n3 > 1 and g.n3 % 2):
            self._add_result(ValidationLevel.WARNING, "grid.n2",
                             "切向网格数为奇数时 FFT 光滑不含 Nyquist 模")

    def _validate_states(self, config: RunConfig, eos: Eos):
        states = []
        for side in ("plus", "minus"):
            try:
                states.append(MhdState.from_vector(getattr(config.background, side), eos))
            except CvsLabError as e:
                self._add_result(ValidationLevel.ERROR, f"background.{side}", f"状态不可容许: {e}")
        return tuple(states) if len(states) == 2 else None

    def _validate_sheet(self, config: RunConfig, plus: MhdState, minus: MhdState):
        """平面电流-涡面：接触分量为零、切向磁场非平行、λ 满足声速界"""
        contact = rh_residual(plus, minus).contact
        if float(np.max(np.abs(contact))) > self.CONTACT_TOL:
            self._add_result(ValidationLevel.ERROR, "background",
                             "背景态不构成平面电流-涡面: v1±、H1± 与 [q] 必须为零 "
                             f"(残差 {float(np.max(np.abs(contact))):.3e})")
        try:
            pair = lambda_pair(plus, minus, config.tolerance.parallel)
        except CvsLabError as e:
            self._add_result(ValidationLevel.ERROR, "background",
                             f"违反切向磁场非平行条件: {e}")
            return
        for side, state, lam in (("plus", plus, pair.lambda_plus), ("minus", minus, pair.lambda_minus)):
            margin = stability_margin(state, lam)
            if margin <= 0:
                self._add_result(ValidationLevel.ERROR, f"background.{side}",
                                 f"λ = {lam:.4f} 违反声速界 (余量 {margin:.3e})")

    def _validate_iteration(self, config: RunConfig):
        it = config.iteration
        if it.theta0 < 1.0:
            self._add_result(ValidationLevel.ERROR, "iteration.theta0",
                             f"θ0 必须 ≥ 1，当前为: {it.theta0}")
        g = config.grid
        space = Grid(max(g.n1, 1), max(g.n2, 1), max(g.n3, 1), g.x1_max, g.L2, g.L3, 1.0, 2)
        cap = resolution_cap(space)
        too_high = [s for s in list(it.s_list) + [it.s0] if s > cap]
        if too_high:
            self._add_result(ValidationLevel.ERROR, "iteration.s_list",
                             f"范数阶数 {too_high} 超出网格分辨率上限 {cap}")
        if it.s0 > it.alpha:
            self._add_result(ValidationLevel.WARNING, "iteration.s0",
                             f"s0 = {it.s0} 大于 α = {it.alpha}，增量参考指数为正")


def validate_run_config(config: RunConfig) -> List[ValidationResult]:
    """
    校验配置，存在错误时抛出 ConfigError 并列出全部错误项

    Returns:
        警告与信息级别的结果
    """
    validator = RunConfigValidator()
    results = validator.validate(config)
    if validator.has_errors():
        raise ConfigError(validator.get_summary(),
                          {"问题": [str(r) for r in validator.get_errors()]})
    return results
