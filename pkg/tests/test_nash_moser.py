import math

import numpy as np
import pytest

from config.run_config import RunConfig
from core.eos_state import TwoPhaseField
from core.exceptions import IterationDiverged
from core.function_spaces import cutoff_width, x1_cutoff
from core.nash_moser import (
    IterationSettings,
    StepRecord,
    fit_exponent,
    fit_window,
    monitor_exponents,
    newton_quadraticity,
    recursion_term,
    reference_L1,
    reference_L2,
    reference_L3,
    run_iteration,
    telescoping_residual,
)
from core.scenarios import build_scenario


def test_monitor_exponents_default_parameters():
    ref = monitor_exponents(4, 4, 8)
    assert ref["iterate"] == 0.0
    assert ref["high"] == -4
    assert ref["modified"] == -3
    assert ref["rhs"] == -5
    assert ref["increment"] == -5
    assert ref["accumulated"] == 1.0


def test_error_reference_branches():
    # α = s + 4 与 α = s + 2 的特殊分支
    assert reference_L1(4, 4, 8) == max(-4, -4)
    assert reference_L1(6, 4, 8) == -2
    assert reference_L2(5, 4, 8) == -5
    assert reference_L3(5, 4, 8) == -4
    assert reference_L1(0, 4, 8) == max(0 + 4 - 8 - 1, 0 + 4 + 4 - 16)


def test_fit_exponent_recovers_power_law():
    theta = np.sqrt(16.0 + np.arange(10))
    assert fit_exponent(theta, 3.0 * theta ** -2.5) == pytest.approx(-2.5, abs=1e-10)
    assert math.isnan(fit_exponent([2.0], [1.0]))
    assert math.isnan(fit_exponent([2.0, 3.0], [0.0, 0.0]))


def test_settings_norm_orders_include_s0():
    settings = IterationSettings(s_list=[0, 2], s0=3)
    assert settings.norm_orders == [0, 2, 3]


def test_fit_window_skips_transient_steps():
    records = [StepRecord(n=n, theta=4.0 + n, delta=0.1, norms={}, checks={}) for n in range(5)]
    assert [r.n for r in fit_window(records, 2)] == [2, 3, 4]
    assert [r.n for r in fit_window(records, 0)] == [0, 1, 2, 3, 4]
    # 剩一步时无法拟合，退回全部记录
    assert len(fit_window(records, 4)) == 5


def test_step_record_row_layout():
    record = StepRecord(n=1, theta=4.1, delta=0.12, norms={"dV": {0: 1.0, 4: 2.0}},
                        checks={"trace_gap": 0.0}, wall_time=0.5)
    row = record.as_row()
    assert list(row) == ["n", "theta", "delta", "dV_s0", "dV_s4", "trace_gap"]
    assert "wall_time" not in row


def test_telescoping_sum_with_linear_smoother(rng):
    shape = (3, 4)

    def smooth(u, n):
        return (1.0 - 0.5 ** (n + 1)) * np.asarray(u)

    source = rng.standard_normal(shape)
    errors = []
    total = np.zeros(shape)
    for n in range(6):
        total = total + recursion_term(n, smooth, source, errors, shape)
        errors.append(rng.standard_normal(shape))
        assert telescoping_residual(n, smooth, source, errors, total) <= 1e-12


def test_recursion_term_without_source_starts_at_zero():
    term = recursion_term(0, lambda u, n: u, None, [], (2, 2))
    np.testing.assert_array_equal(term, 0.0)


@pytest.fixture(scope="module")
def short_scenario():
    config = RunConfig.from_text(
        "scenario = perturbed-2d\n"
        "grid.n1 = 16\n"
        "grid.n2 = 16\n"
        "time.T = 0.1\n"
        "iteration.n_max = 2\n"
    )
    return build_scenario(config, seed=3)


@pytest.mark.slow
def test_short_iteration_bookkeeping(short_scenario):
    settings = short_scenario.settings()
    try:
        result = run_iteration(short_scenario.problem(), settings)
    except IterationDiverged as e:
        result = e.history
    records = result.state.records
    assert len(records) == 2
    assert [r.n for r in records] == [0, 1]
    for record in records:
        row = record.as_row()
        assert f"residual_s{settings.s0}" in row
        assert row["ebar3_max"] == 0.0
        assert max(v for k, v in row.items() if k.startswith("telescoping_")) <= 1e-10
    summary = result.report.as_dict()
    assert summary["steps"] == 2
    assert set(summary["increment_slopes"]) == {str(s) for s in settings.norm_orders}


@pytest.mark.slow
def test_linearization_errors_are_quadratic(short_scenario, rng):
    problem = short_scenario.problem()
    grid = problem.grid
    t, x1, x2, x3 = grid.mesh()
    bump = np.exp(-(x1 - 1.0) ** 2) * np.cos(x2) * t * np.ones(grid.shape)
    dV = TwoPhaseField(1e-2 * rng.uniform(-1, 1, (8, 1, 1, 1, 1)) * bump,
                       1e-2 * rng.uniform(-1, 1, (8, 1, 1, 1, 1)) * bump, grid)
    dphi = 1e-2 * t[:, 0] * np.cos(x2[:, 0] + x3[:, 0]) * np.ones(grid.boundary_shape)
    lift = x1_cutoff(grid.x1, cutoff_width(grid))[None, :, None, None] * dphi[:, None]
    dPhi = TwoPhaseField(lift, lift.copy(), grid)
    slopes = newton_quadraticity(problem, TwoPhaseField.zeros(grid), TwoPhaseField.zeros(grid, None),
                                 np.zeros(grid.boundary_shape), dV, dPhi, dphi)
    assert set(slopes) == {"e1", "ebar1", "etilde1"}
    for key, slope in slopes.items():
        assert slope == pytest.approx(2.0, abs=0.1), key


@pytest.mark.slow
def test_default_run_converges():
    config = RunConfig.from_text("")
    scenario = build_scenario(config)
    settings = scenario.settings()
    result = run_iteration(scenario.problem(), settings)
    report = result.report
    assert report.steps == 15
    assert report.converged, report.as_dict()
    assert report.residual_ratio <= 0.1
    s0, alpha = settings.s0, settings.alpha
    assert abs(report.increment_slopes[s0] - (s0 - alpha - 1)) <= 1.0
