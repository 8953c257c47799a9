import numpy as np
import pytest

from config.run_config import RunConfig
from core.geometry_transform import SIGNS, cfl_rate
from core.scenarios import (
    build_scenario,
    initial_data,
    mode_weights,
    settings_from_config,
    space_grid,
)


@pytest.fixture
def small_config():
    return RunConfig.from_text(
        "scenario = perturbed-2d\n"
        "grid.n1 = 16\n"
        "grid.n2 = 16\n"
        "time.T = 0.1\n"
    )


def test_planar_scenario_is_background(planar_config):
    scenario = build_scenario(planar_config, seed=0)
    assert scenario.name == "planar"
    assert (scenario.grid.n1, scenario.grid.n2, scenario.grid.n3) == (16, 16, 8)
    for sign, state in zip(SIGNS, (planar_config.background.plus, planar_config.background.minus)):
        np.testing.assert_allclose(scenario.U0[sign], np.asarray(state)[:, None, None, None]
                                   * np.ones(scenario.U0[sign].shape))
    np.testing.assert_array_equal(scenario.psi0, 0.0)


def test_time_step_respects_cfl(small_config):
    scenario = build_scenario(small_config, seed=1)
    courant = scenario.grid.dt * cfl_rate(scenario.grid, scenario.speeds)
    assert courant <= small_config.time.cfl + 1e-12
    assert scenario.grid.T == pytest.approx(0.1)


def test_initial_data_is_seeded(small_config):
    grid = space_grid(small_config)
    a, _ = initial_data(small_config, grid, seed=7)
    b, _ = initial_data(small_config, grid, seed=7)
    c, _ = initial_data(small_config, grid, seed=8)
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_initial_data_perturbation_size(small_config):
    grid = space_grid(small_config)
    U0, psi0 = initial_data(small_config, grid, seed=2)
    background = np.asarray(small_config.background.plus)[:, None, None, None]
    deviation = float(np.max(np.abs(U0[1] - background)))
    assert 0.0 < deviation <= small_config.perturbation.amplitude
    # 平面前沿时法向磁场分量为零
    np.testing.assert_allclose(U0[1][4], 0.0, atol=1e-15)
    np.testing.assert_array_equal(psi0, 0.0)


def test_settings_follow_config(small_config):
    settings = settings_from_config(small_config)
    assert settings.theta0 == small_config.iteration.theta0
    assert settings.s_list == list(small_config.iteration.s_list)
    assert settings.kappa_min == small_config.tolerance.kappa_min


def test_mode_weights_follow_power_law(small_config):
    grid = space_grid(small_config)
    c = mode_weights(small_config, grid)
    # n2 = 16 只能分辨 4 个倍频
    assert len(c) == 4
    assert np.sum(c) == pytest.approx(1.0)
    assert np.all(np.diff(c) < 0.0)


def test_mode_weights_single_mode_without_tangential_wave():
    config = RunConfig.from_text(
        "scenario = perturbed-2d\n"
        "grid.n1 = 16\n"
        "grid.n2 = 16\n"
        "perturbation.mode2 = 0\n"
    )
    np.testing.assert_array_equal(mode_weights(config, space_grid(config)), [1.0])
