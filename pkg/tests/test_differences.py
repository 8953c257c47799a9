import math

import numpy as np
import pytest

from core.differences import CentralDiff, SchemeDiff, SpectralDiff
from core.eos_state import Grid


@pytest.fixture
def grid():
    return Grid(32, 32, 1, 2.0, 2 * math.pi, 2 * math.pi, 1.0, 11)


def test_central_diff_exact_on_quadratics(grid):
    t, x1, x2, _ = grid.mesh()
    u = (t ** 2 + 3.0 * x1 ** 2) * np.ones(grid.shape)
    d = CentralDiff(grid)
    np.testing.assert_allclose(d.x1(u), 6.0 * x1 * np.ones(grid.shape), atol=1e-10)
    np.testing.assert_allclose(d.t(u), 2.0 * t * np.ones(grid.shape), atol=1e-10)


def test_tangential_derivative_is_periodic_central(grid):
    _, _, x2, _ = grid.mesh()
    u = np.sin(x2) * np.ones(grid.shape)
    d = CentralDiff(grid)
    expected = np.cos(x2) * math.sin(grid.dx2) / grid.dx2
    np.testing.assert_allclose(d.x2(u), expected * np.ones(grid.shape), atol=1e-12)
    np.testing.assert_array_equal(d.x3(u), 0.0)


def test_boundary_time_derivative(grid):
    b = np.broadcast_to(grid.t[:, None, None] ** 2, grid.boundary_shape)
    d = CentralDiff(grid)
    np.testing.assert_allclose(d.boundary_t(b), 2.0 * np.broadcast_to(grid.t[:, None, None],
                                                                      grid.boundary_shape),
                               atol=1e-10)


def test_scheme_diff_constant_field_has_zero_rate(grid):
    d = SchemeDiff(grid, alpha=(1.0, 2.0, 0.0))
    u = np.full((8,) + grid.shape, 3.0)
    np.testing.assert_array_equal(d.t(u), 0.0)
    np.testing.assert_array_equal(d.dissipation(u), 0.0)


def test_scheme_diff_front_mode_skips_x1_dissipation(grid):
    _, x1, _, _ = grid.mesh()
    u = (x1 ** 2) * np.ones(grid.shape)
    d = SchemeDiff(grid, alpha=(1.0, 0.0, 0.0), beta=(0.0, 0.0, 0.0))
    np.testing.assert_array_equal(d.dissipation(u, front=True), 0.0)
    inner = d.dissipation(u)[:, 1:-1]
    np.testing.assert_allclose(inner, 1.0 / (2 * grid.dx1) * 2 * grid.dx1 ** 2, rtol=1e-10)
    np.testing.assert_array_equal(d.dissipation(u)[:, 0], 0.0)


def test_scheme_diff_forward_difference_in_time(grid):
    u = np.broadcast_to(grid.t[:, None, None, None], grid.shape).copy()
    d = SchemeDiff(grid)
    np.testing.assert_allclose(d.forward(u), 1.0)


def test_scheme_diff_accepts_boundary_fields(grid):
    b = np.broadcast_to(grid.t[:, None, None], grid.boundary_shape).copy()
    d = SchemeDiff(grid, beta=(0.0, 0.5, 0.0))
    out = d.boundary_t(b)
    assert out.shape == grid.boundary_shape
    np.testing.assert_allclose(out, 1.0)


def test_spectral_derivative_exact_for_low_modes():
    n = 16
    grid = Grid(n - 1, n, 1, 2 * math.pi, 2 * math.pi, 2 * math.pi, 2 * math.pi * (n - 1) / n, n,
                periodic_x1=True)
    t, x1, x2, _ = grid.mesh()
    u = np.sin(2 * x1) * np.cos(x2) * np.cos(t)
    d = SpectralDiff.from_grid(grid)
    np.testing.assert_allclose(d.x1(u), 2 * np.cos(2 * x1) * np.cos(x2) * np.cos(t), atol=1e-12)
    np.testing.assert_allclose(d.t(u), -np.sin(2 * x1) * np.cos(x2) * np.sin(t), atol=1e-12)
