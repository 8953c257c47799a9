"""
异常定义 - 数值实验各阶段的领域错误
"""
from typing import Any, Dict, Optional


class CvsLabError(Exception):
    """所有领域错误的基类"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = dict(details or {})

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extra = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.message} ({extra})"


class DomainError(CvsLabError):
    """输入不在定义域内（非正密度、负的 x1 等）"""


class ParameterError(CvsLabError):
    """参数取值非法"""


class DegenerateConfiguration(CvsLabError):
    """切向磁场平行，λ± 无法唯一确定"""


class StabilityConditionError(CvsLabError):
    """λ 违反声速界，A0 可能失去正定性"""


class FrontDegenerate(CvsLabError):
    """速端变换失效：±∂x1Ψ 低于 κ_min"""


class CflViolation(CvsLabError):
    """时间步长违反 CFL 条件"""


class ResolutionError(CvsLabError):
    """范数阶数超出网格分辨率"""


class ConfigError(CvsLabError):
    """配置文件无法解析或校验失败"""


class ConstraintViolation(CvsLabError):
    """修正状态的边界约束残差超过容差"""


class IterationDiverged(CvsLabError):
    """迭代发散，保留已完成步骤的历史"""

    def __init__(self, message: str, history=None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.history = history


class ReportError(CvsLabError):
    """指标文件格式错误或拟合退化"""
