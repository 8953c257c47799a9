"""
错误处理服务 - 把领域错误翻译为用户提示、建议与退出码
"""
import logging
import traceback
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from config.constants import EXIT_CONFIG_ERROR, EXIT_INVARIANT_FAILED, EXIT_NUMERICAL_ERROR, EXIT_OK

logger = logging.getLogger(__name__)


@dataclass
class ErrorInfo:
    """错误信息"""
    original_error: Exception  # 原始错误
    user_message: str  # 用户友好的错误消息
    error_type: str  # 错误类型
    severity: str  # 严重程度：info, warning, error, critical
    suggestions: List[str]  # 解决建议
    technical_details: str  # 技术细节
    exit_code: int = EXIT_NUMERICAL_ERROR


class ErrorHandler:
    """错误处理器"""

    def __init__(self):
        self._error_patterns: Dict[str, Tuple[str, List[str]]] = {}
        self._init_error_patterns()

    def _init_error_patterns(self):
        """初始化错误模式"""
        self._error_patterns = {
            # 配置相关错误
            'ConfigError': (
                '配置文件无效',
                [
                    '检查配置项名称与取值类型',
                    '参考 config/default.cfg 中的说明',
                    '查看错误详情了解具体问题'
                ]
            ),
            'ParameterError': (
                '参数取值非法',
                [
                    '检查 γ > 1、θ0 ≥ 1 等取值范围',
                    '确认网格数均为正整数'
                ]
            ),
            'ReportError': (
                '指标文件无法用于拟合',
                [
                    '确认指标文件由 iterate 子命令生成',
                    '拟合至少需要两行记录'
                ]
            ),

            # 数值相关错误
            'DomainError': (
                '状态超出定义域',
                [
                    '检查压力与密度是否为正',
                    '减小扰动幅度 perturbation.amplitude'
                ]
            ),
            'DegenerateConfiguration': (
                '切向磁场平行，违反非平行条件',
                [
                    '调整背景态 background.plus / background.minus 中的 (H2, H3)',
                    '增大两侧切向磁场之间的夹角'
                ]
            ),
            'StabilityConditionError': (
                'λ 违反声速界',
                [
                    '减小背景态的切向速度跳跃',
                    '增大切向磁场强度'
                ]
            ),
            'FrontDegenerate': (
                '速端变换失效',
                [
                    '减小前沿扰动幅度 perturbation.front_amplitude',
                    '缩短终止时间 time.T'
                ]
            ),
            'CflViolation': (
                '时间步长违反 CFL 条件',
                [
                    '减小 time.cfl',
                    '检查耗散速度是否过大'
                ]
            ),
            'ResolutionError': (
                '范数阶数超出网格分辨率',
                [
                    '减小 iteration.s_list 中的阶数',
                    '加密网格'
                ]
            ),
            'ConstraintViolation': (
                '修正状态的边界约束不满足',
                [
                    '检查近似解的约束报告',
                    '放宽 tolerance.constraint'
                ]
            ),
            'IterationDiverged': (
                '迭代发散',
                [
                    '增大 θ0 或减小扰动幅度',
                    '已完成步骤的指标仍会写出'
                ]
            ),

            # 通用错误
            'FileNotFoundError': (
                '文件未找到',
                [
                    '请检查文件路径是否正确',
                    '确认文件是否存在'
                ]
            ),
            'PermissionError': (
                '权限不足',
                [
                    '检查输出目录的写权限',
                    '使用 --out 指定其他目录'
                ]
            ),
            'MemoryError': (
                '内存不足',
                [
                    '减小网格规模',
                    '通过 CVS_MHD_THREADS 限制线程数'
                ]
            ),
            'FloatingPointError': (
                '浮点运算异常',
                [
                    '减小扰动幅度或 CFL 数',
                    '查看日志中最后一步的指标'
                ]
            ),
        }

    def handle_error(self, error: Exception, context: str = "") -> ErrorInfo:
        """处理错误，返回用户友好的错误信息"""
        error_type = type(error).__name__
        error_message = str(error)

        user_message, suggestions = self._find_error_pattern(error_type, error_message)
        if not user_message:
            user_message = f"发生未知错误: {error_type}"
            suggestions = ['查看日志文件中的堆栈跟踪']

        severity = self._determine_severity(error_type)
        error_info = ErrorInfo(
            original_error=error,
            user_message=user_message,
            error_type=error_type,
            severity=severity,
            suggestions=suggestions,
            technical_details=self._generate_technical_details(error, context),
            exit_code=self._exit_code(error_type),
        )
        self._log_error(error_info)
        return error_info

    def _find_error_pattern(self, error_type: str, error_message: str) -> Tuple[Optional[str], List[str]]:
        """查找匹配的错误模式"""
        if error_type in self._error_patterns:
            return self._error_patterns[error_type]
        for pattern_type, (message, suggestions) in self._error_patterns.items():
            if pattern_type.lower() in error_type.lower():
                return message, suggestions
        return None, []

    def _determine_severity(self, error_type: str) -> str:
        """确定错误严重程度"""
        critical_errors = ['MemoryError', 'SystemError']
        error_errors = [
            'DomainError', 'DegenerateConfiguration', 'StabilityConditionError', 'FrontDegenerate',
            'CflViolation', 'ConstraintViolation', 'IterationDiverged', 'FloatingPointError',
            'FileNotFoundError', 'PermissionError', 'OSError',
        ]
        warning_errors = ['ConfigError', 'ParameterError', 'ResolutionError', 'ReportError']

        if error_type in critical_errors:
            return 'critical'
        elif error_type in error_errors:
            return 'error'
        elif error_type in warning_errors:
            return 'warning'
        return 'info'

    @staticmethod
    def _exit_code(error_type: str) -> int:
        """配置与输入错误 → 2，数值失败 → 3"""
        if error_type in ('ConfigError', 'ParameterError', 'ReportError', 'FileNotFoundError',
                          'PermissionError'):
            return EXIT_CONFIG_ERROR
        return EXIT_NUMERICAL_ERROR

    def _generate_technical_details(self, error: Exception, context: str) -> str:
        """生成技术细节"""
        details = f"错误类型: {type(error).__name__}\n"
        details += f"错误消息: {str(error)}\n"
        if context:
            details += f"上下文: {context}\n"
        extra = getattr(error, "details", None)
        if extra:
            details += "".join(f"  {k} = {v}\n" for k, v in extra.items())
        details += "\n堆栈跟踪:\n"
        details += "".join(traceback.format_exception(type(error), error, error.__traceback__))
        return details

    def _log_error(self, error_info: ErrorInfo):
        """记录错误"""
        log_message = f"用户错误: {error_info.user_message} ({error_info.error_type})"
        if error_info.severity == 'critical':
            logger.critical(log_message)
        elif error_info.severity == 'error':
            logger.error(log_message)
        elif error_info.severity == 'warning':
            logger.warning(log_message)
        else:
            logger.info(log_message)
        logger.debug(error_info.technical_details)

    def format_message(self, error_info: ErrorInfo) -> str:
        """控制台提示：消息与编号建议"""
        message = f"{error_info.user_message}: {error_info.original_error}"
        if error_info.suggestions:
            message += "\n建议解决方案:"
            for i, suggestion in enumerate(error_info.suggestions, 1):
                message += f"\n  {i}. {suggestion}"
        return message


# 全局错误处理器实例
_global_error_handler = None


def get_error_handler() -> ErrorHandler:
    """获取全局错误处理器实例"""
    global _global_error_handler
    if _global_error_handler is None:
        _global_error_handler = ErrorHandler()
    return _global_error_handler


def handle_error(error: Exception, context: str = "") -> ErrorInfo:
    """处理错误（便捷函数）"""
    return get_error_handler().handle_error(error, context)


def translate_error(error: Exception) -> str:
    """翻译错误消息（便捷函数）"""
    return get_error_handler().handle_error(error).user_message


def invariant_exit_code(passed: bool) -> int:
    """不变量检验的退出码"""
    return EXIT_OK if passed else EXIT_INVARIANT_FAILED
