import pytest

from config.run_config import RunConfig
from core.exceptions import ConfigError
from core.validator import RunConfigValidator, ValidationLevel, validate_run_config


def _errors(config):
    validator = RunConfigValidator()
    validator.validate(config)
    return [r.field for r in validator.get_errors()]


def test_default_config_is_valid():
    validator = RunConfigValidator()
    validator.validate(RunConfig.from_text(""))
    assert not validator.has_errors()
    assert validator.get_summary() == "配置有效"


def test_parallel_tangential_fields_rejected():
    config = RunConfig.from_text(
        "background.plus = 1, 0, 0.2, 0, 0, 1, 0.5, 0\n"
        "background.minus = 1, 0, -0.2, 0, 0, 1, 0.5, 0\n"
    )
    assert "background" in _errors(config)


def test_contact_residual_rejected():
    config = RunConfig.from_text("background.minus = 1, 0.1, -0.2, 0, 0, 0.5, 1, -0.5\n")
    assert "background" in _errors(config)


def test_sonic_bound_violation_rejected():
    # 大的切向速度跳跃使 λ 越过声速界
    config = RunConfig.from_text(
        "background.plus = 1, 0, 3, 0, 0, 1, 0.5, 0\n"
        "background.minus = 1, 0, -3, 0, 0, 0.5, 1, -0.5\n"
    )
    errors = _errors(config)
    assert any(f.startswith("background") for f in errors)


def test_theta0_below_one_rejected():
    config = RunConfig.from_text("iteration.theta0 = 0.5\n")
    assert "iteration.theta0" in _errors(config)


def test_norm_order_above_resolution_cap():
    config = RunConfig.from_text("grid.n1 = 8\ngrid.n2 = 8\niteration.s_list = 0, 40\n")
    assert "iteration.s_list" in _errors(config)


def test_s0_above_alpha_is_warning_only():
    config = RunConfig.from_text("iteration.s0 = 4\niteration.alpha = 3\n")
    results = validate_run_config(config)
    assert [r.field for r in results if r.level == ValidationLevel.WARNING] == ["iteration.s0"]


def test_validate_run_config_lists_every_error():
    config = RunConfig.from_text("iteration.theta0 = 0.5\ngrid.n2 = 8\niteration.s_list = 0, 40\n")
    with pytest.raises(ConfigError) as excinfo:
        validate_run_config(config)
    problems = excinfo.value.details["问题"]
    assert len(problems) == 2
    assert all(p.startswith("[错误]") for p in problems)
