import math

import numpy as np
import pytest

from core.differences import CentralDiff
from core.eos_state import Grid, MhdState, TwoPhaseField
from core.exceptions import FrontDegenerate
from core.geometry_transform import (
    assemble_Lbar,
    boundary_operator,
    boundary_residual,
    enforce_normal_field,
    front_from_lifts,
    front_gradients,
    lift_front,
    make_scheme_diffs,
    phase_speeds,
    planar_front,
)
from core.mhd_system import assemble_augmented, lambda_pair
from core.studies import background_field


@pytest.fixture
def grid():
    return Grid(16, 16, 1, 3.0, 2 * math.pi, 2 * math.pi, 0.1, 3)


def test_lift_front_trace_and_far_field(grid, rng):
    psi = 0.05 * rng.standard_normal(grid.boundary_shape)
    for sign in (1, -1):
        Psi = lift_front(psi, grid, sign)
        np.testing.assert_allclose(Psi[:, 0], psi, atol=1e-15)
        far = grid.x1 >= 1.0
        np.testing.assert_allclose(Psi[:, far], sign * np.broadcast_to(
            grid.x1[far][:, None, None], Psi[:, far].shape[1:]))


def test_planar_front_is_nondegenerate(grid):
    front = planar_front(grid)
    assert front.check(0.5) == pytest.approx(1.0)
    assert front.trace_gap == 0.0


def test_front_check_rejects_folded_lift(grid):
    Psi_plus = np.broadcast_to(0.1 * grid.x1[:, None, None], grid.shape).copy()
    front = front_from_lifts(Psi_plus, -Psi_plus, grid)
    with pytest.raises(FrontDegenerate):
        front.check(0.5)


def test_boundary_operator_planar_sheet_vanishes(background):
    plus, minus = background
    np.testing.assert_allclose(boundary_operator(plus, minus, 0.0, 0.0, 0.0), 0.0, atol=1e-14)


def test_boundary_operator_tilted_front(background):
    plus, minus = background
    eps = 1e-3
    B = boundary_operator(plus, minus, 0.0, eps, 0.0)
    assert B[2] == pytest.approx(-eps * plus.H[1])
    assert B[0] == pytest.approx(eps * plus.v[1])


def test_assemble_Lbar_scales_normal_matrix(background):
    plus, minus = background
    lam = lambda_pair(plus, minus).lambda_plus
    reference = assemble_augmented(plus, lam)
    system = assemble_Lbar(plus, (0.0, 2.0, 0.0, 0.0), lam)
    np.testing.assert_allclose(system.A1, reference.A1 / 2.0, atol=1e-14)
    np.testing.assert_allclose(system.A0, reference.A0, atol=1e-14)


def test_assemble_Lbar_rejects_small_jacobian(background):
    plus, minus = background
    lam = lambda_pair(plus, minus).lambda_plus
    with pytest.raises(FrontDegenerate):
        assemble_Lbar(plus, (0.0, 0.1, 0.0, 0.0), lam)


def test_enforce_normal_field(grid, rng):
    psi = 0.05 * np.cos(grid.x2)[None, :, None] * np.ones(grid.boundary_shape)
    Psi = lift_front(psi, grid, 1)
    grads = front_gradients(Psi, CentralDiff(grid))
    U = rng.standard_normal((8,) + grid.shape)
    fixed = enforce_normal_field(U, grads)
    np.testing.assert_allclose(fixed[4] - grads.x2 * fixed[5] - grads.x3 * fixed[6], 0.0,
                               atol=1e-14)
    np.testing.assert_array_equal(fixed[5:], U[5:])


def test_planar_background_satisfies_boundary_conditions(grid, eos):
    U = background_field(grid)
    front = planar_front(grid)
    speeds = phase_speeds(U, front, eos)
    diffs = make_scheme_diffs(grid, speeds)
    np.testing.assert_allclose(boundary_residual(U, front, diffs[1]), 0.0, atol=1e-14)
    assert diffs[1].beta == diffs[-1].beta
    assert all(a > 0 for a in speeds[1].alpha[:2])
