import math

import numpy as np
import pytest

from core.eos_state import Grid
from core.exceptions import DomainError, ParameterError, ResolutionError
from core.function_spaces import (
    AnisotropicNorm,
    Smoother,
    SmootherFamily,
    boundary_norm,
    layer_grid,
    lift_boundary_data,
    measure_smoothing_constants,
    norm_Bs,
    resolution_cap,
    sigma,
    smooth_step,
    spectral_cutoff,
    theta_schedule,
)


@pytest.fixture
def grid():
    return Grid(32, 64, 1, 3.0, 2 * math.pi, 2 * math.pi, 0.1, 3)


def test_cutoffs():
    assert smooth_step(0.0) == 0.0
    assert smooth_step(1.0) == 1.0
    assert smooth_step(0.5) == pytest.approx(0.5)
    np.testing.assert_allclose(spectral_cutoff(np.array([0.0, 0.5, 1.0, 2.0])), [1, 1, 0, 0])


def test_sigma_weight():
    assert sigma(0.5) == pytest.approx(0.5)
    assert sigma(1.0) == pytest.approx(1.0)
    assert sigma(3.0) == pytest.approx(2.0)
    x = np.linspace(0.0, 3.0, 301)
    assert np.all(np.diff(sigma(x)) >= -1e-15)
    assert sigma.derivative(1.0) == pytest.approx(1.0)
    assert sigma.derivative(2.0) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        sigma(-0.1)


def test_theta_schedule():
    assert theta_schedule(1.0, 0)[0] == pytest.approx(1.0)
    assert theta_schedule(1.0, 3)[0] == pytest.approx(2.0)
    for n in range(10):
        theta, delta = theta_schedule(4.0, n)
        theta_next, _ = theta_schedule(4.0, n + 1)
        assert delta == pytest.approx(theta_next - theta, rel=1e-12)
        assert 0.99 < delta * 2.0 * theta_next <= 1.0
    with pytest.raises(ParameterError):
        theta_schedule(0.5, 0)


def test_resolution_cap(grid):
    assert resolution_cap(grid) == 8
    with pytest.raises(ResolutionError):
        AnisotropicNorm(grid, s=resolution_cap(grid) + 1)


def test_norm_zero_order_is_weighted_l2(grid):
    u = np.ones(grid.shape)
    norm = AnisotropicNorm(grid, s=0, mu=0.0)
    expected = math.sqrt(grid.T * grid.x1_max * grid.L2 * grid.L3)
    assert norm(u) == pytest.approx(expected, rel=1e-10)
    assert norm_Bs(u, grid, 0, 0.0) == pytest.approx(expected, rel=1e-10)


def test_norms_increase_with_order(grid):
    _, x1, x2, _ = grid.mesh()
    u = np.exp(-(x1 - 1.5) ** 2) * np.cos(3 * x2) * np.ones(grid.shape)
    table = AnisotropicNorm(grid, s=4, mu=1.0).norms(u, [0, 2, 4])
    assert table[0] < table[2] < table[4]


def test_boundary_norm_of_single_mode(grid):
    _, _, x2, _ = grid.mesh()
    b = np.cos(2 * x2[:, 0]) * np.ones(grid.boundary_shape)
    low = boundary_norm(b, grid, 0, 0.0)
    high = boundary_norm(b, grid, 1, 0.0)
    assert high > low > 0


def test_smoother_keeps_low_modes(grid):
    _, _, x2, _ = grid.mesh()
    u = np.cos(2 * x2) * np.ones(grid.shape)
    out = Smoother(grid).apply(u, 8.0)
    np.testing.assert_allclose(out, u, atol=1e-12)


def test_smoother_removes_high_modes(grid):
    _, _, x2, _ = grid.mesh()
    u = np.cos(16 * x2) * np.ones(grid.shape)
    out = Smoother(grid).apply(u, 4.0)
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_smoother_rejects_small_theta(grid):
    with pytest.raises(ParameterError):
        Smoother(grid).apply(np.zeros(grid.shape), 0.5)


def test_trace_preserving_smoother_keeps_equal_traces(grid, rng):
    trace = rng.standard_normal(grid.boundary_shape)
    a = rng.standard_normal(grid.shape)
    b = rng.standard_normal(grid.shape)
    a[:, 0] = trace
    b[:, 0] = trace
    family = SmootherFamily(grid, 4.0)
    sa = family.S_trace(a, 2)
    sb = family.S_trace(b, 2)
    np.testing.assert_allclose(sa[:, 0], sb[:, 0], atol=1e-12)
    np.testing.assert_allclose(sa[:, 0], family.S_boundary(trace, 2), atol=1e-12)


def test_lift_boundary_data_trace(grid, rng):
    v = rng.standard_normal(grid.boundary_shape)
    lifted = lift_boundary_data(v, grid)
    assert lifted.trace_gap <= 1e-14
    assert lifted.field.shape == grid.shape
    np.testing.assert_array_equal(lifted.field[:, -1], 0.0)


@pytest.mark.slow
def test_smoothing_constants_bounded_in_theta():
    constants = measure_smoothing_constants(thetas=(2, 4, 8), max_order=2)
    assert constants.max_drift("low") < 10.0
    assert constants.max_drift("high") < 10.0


def test_layer_grid_scales_with_theta():
    coarse, fine = layer_grid(4.0), layer_grid(8.0)
    assert coarse.x1_max == pytest.approx(4.0 * fine.x1_max)
    assert coarse.L2 == pytest.approx(2.0 * fine.L2)
    assert coarse.shape == fine.shape


def test_trace_constants_start_at_theta_four():
    constants = measure_smoothing_constants(thetas=(2, 4), max_order=2, seed=1)
    assert constants.trace_thetas == (4.0,)
    assert ("trace", 0, 1) not in constants.constants
    assert all(len(constants.constants[("trace", s, a)]) == 1 for s in range(3) for a in (0, 2))
    assert all(v[0] > 0 for k, v in constants.constants.items() if k[0] == "trace")
    assert len(constants.constants[("low", 2, 0)]) == 2


@pytest.mark.slow
def test_trace_constants_stable_in_theta():
    constants = measure_smoothing_constants(thetas=(2, 4, 8, 16), seed=5)
    assert constants.trace_thetas == (4.0, 8.0, 16.0)
    assert constants.max_drift("trace") <= 2.0
    assert constants.max_drift() <= 2.0
