import pytest

from config.constants import EXIT_CONFIG_ERROR, EXIT_INVARIANT_FAILED, EXIT_NUMERICAL_ERROR, EXIT_OK
from core.error_handler import ErrorHandler, get_error_handler, invariant_exit_code, translate_error
from core.exceptions import (
    CflViolation,
    ConfigError,
    DegenerateConfiguration,
    FrontDegenerate,
    IterationDiverged,
    ParameterError,
    ReportError,
)


@pytest.mark.parametrize("error, code", [
    (ConfigError("坏配置"), EXIT_CONFIG_ERROR),
    (ParameterError("θ0 < 1"), EXIT_CONFIG_ERROR),
    (ReportError("一行"), EXIT_CONFIG_ERROR),
    (FileNotFoundError("x.cfg"), EXIT_CONFIG_ERROR),
    (PermissionError("out"), EXIT_CONFIG_ERROR),
    (DegenerateConfiguration("平行"), EXIT_NUMERICAL_ERROR),
    (FrontDegenerate("κ"), EXIT_NUMERICAL_ERROR),
    (CflViolation("dt"), EXIT_NUMERICAL_ERROR),
    (IterationDiverged("发散"), EXIT_NUMERICAL_ERROR),
    (FloatingPointError("overflow"), EXIT_NUMERICAL_ERROR),
])
def test_exit_codes(error, code):
    assert ErrorHandler().handle_error(error).exit_code == code


def test_unknown_error_gets_generic_message():
    info = ErrorHandler().handle_error(KeyError("k"))
    assert info.user_message == "发生未知错误: KeyError"
    assert info.severity == "info"


def test_format_message_lists_suggestions():
    handler = ErrorHandler()
    error = ConfigError("配置结构校验失败", {"问题": ["grid.n1: 0 is less than the minimum of 1"]})
    info = handler.handle_error(error, context="check")
    text = handler.format_message(info)
    assert text.startswith("配置文件无效: 配置结构校验失败")
    assert "建议解决方案:" in text
    assert "\n  1. " in text
    assert "上下文: check" in info.technical_details
    assert "问题 = " in info.technical_details


def test_global_handler_is_shared():
    assert get_error_handler() is get_error_handler()
    assert translate_error(DegenerateConfiguration("平行")) == "切向磁场平行，违反非平行条件"


def test_invariant_exit_code():
    assert invariant_exit_code(True) == EXIT_OK
    assert invariant_exit_code(False) == EXIT_INVARIANT_FAILED
