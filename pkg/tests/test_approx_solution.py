import numpy as np
import pytest

from config.run_config import RunConfig
from core.approx_solution import (
    ReformulatedProblem,
    build_compat_data,
    fill_outside_interior,
    time_cutoff,
    total_pressure,
)
from core.eos_state import TwoPhaseField
from core.exceptions import ParameterError
from core.scenarios import build_scenario


@pytest.fixture(scope="module")
def scenario():
    config = RunConfig.from_text(
        "scenario = perturbed-2d\n"
        "grid.n1 = 16\n"
        "grid.n2 = 16\n"
        "time.T = 0.1\n"
    )
    return build_scenario(config, seed=5)


@pytest.fixture(scope="module")
def planar():
    return build_scenario(RunConfig.from_text("scenario = planar\n"), seed=0)


def test_time_cutoff_profile():
    t = np.array([0.0, 0.25, 0.5, 1.0])
    np.testing.assert_allclose(time_cutoff(t, 1.0), [1.0, 1.0, 1.0, 0.0])


def test_total_pressure():
    U = np.array([1.0, 0, 0, 0, 0.0, 1.0, 0.5, 0.0])
    assert total_pressure(U) == pytest.approx(1.625)


def test_fill_outside_interior_copies_neighbours(small_grid, rng):
    u = rng.standard_normal((8,) + small_grid.shape)
    out = fill_outside_interior(u)
    np.testing.assert_array_equal(out[:, -1], out[:, -2])
    np.testing.assert_array_equal(out[:, :-1, 0], out[:, :-1, 1])
    np.testing.assert_array_equal(out[:, :-1, 1:-1], u[:, :-1, 1:-1])


def test_compat_order_out_of_range(scenario):
    with pytest.raises(ParameterError):
        build_compat_data(scenario.U0, scenario.psi0, 3, scenario.grid, scenario.eos,
                          scenario.diffs)


def test_compat_data_shapes(scenario):
    data = build_compat_data(scenario.U0, scenario.psi0, 1, scenario.grid, scenario.eos,
                             scenario.diffs)
    assert len(data.U[1]) == 2
    assert len(data.Psi[1]) == 3
    norms = data.rate_norms()
    assert norms[0] > 0 and np.isfinite(norms[1])


def test_approximate_solution_satisfies_constraints(scenario):
    approx = scenario.approx()
    assert approx.constraint_report().max() <= 1e-10
    np.testing.assert_allclose(approx.front[1][:, 0], approx.psi, atol=1e-14)


def test_planar_problem_has_zero_residual(planar):
    problem = ReformulatedProblem(planar.approx())
    grid = problem.grid
    V = TwoPhaseField.zeros(grid)
    Phi = TwoPhaseField.zeros(grid, None)
    assert problem.nonlinear_residual(V, Phi).max_abs() <= 1e-12
    assert float(np.max(np.abs(problem.boundary(V, np.zeros(grid.boundary_shape))))) <= 1e-12
    assert problem.eikonal(V, Phi).max_abs() == 0.0
