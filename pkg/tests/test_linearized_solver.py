import numpy as np
import pytest

from core.eos_state import TwoPhaseField
from core.geometry_transform import SIGNS
from core.linearized_solver import (
    boundary_quadratic_form,
    energy_report,
    good_unknown,
    j_inverse,
    j_matrix,
    j_transform,
    p_inverse,
    p_matrix,
    p_transform_check,
    recover_from_good,
    solve_linearized,
)
from core.differences import CentralDiff
from core.mhd_system import lambda_fields
from core.studies import planar_frame


@pytest.fixture(scope="module")
def frame():
    from core.eos_state import Eos
    return planar_frame(8, 8, 0.1, Eos())


def _boundary_samples(rng, count):
    """满足程函关系与 U_{H,N} = 0 的随机边界样本"""
    Up = rng.uniform(-1.0, 1.0, size=(8, count))
    Um = rng.uniform(-1.0, 1.0, size=(8, count))
    Up[0] = rng.uniform(0.5, 2.0, size=count)
    Um[0] = rng.uniform(0.5, 2.0, size=count)
    a = rng.uniform(0.0, 2 * np.pi, size=count)
    gap = rng.uniform(0.3, np.pi - 0.3, size=count)
    Up[5], Up[6] = np.cos(a), np.sin(a)
    Um[5], Um[6] = np.cos(a + gap), np.sin(a + gap)
    P2, P3 = rng.uniform(-0.3, 0.3, size=(2, count))
    for U in (Up, Um):
        U[4] = P2 * U[5] + P3 * U[6]
    Pt = Up[1] - Up[2] * P2 - Up[3] * P3
    Um[1] = Pt + Um[2] * P2 + Um[3] * P3
    grads_p = (Pt, rng.uniform(0.5, 2.0, size=count), P2, P3)
    grads_m = (Pt, -rng.uniform(0.5, 2.0, size=count), P2, P3)
    return Up, Um, grads_p, grads_m


def test_j_transform_matches_matrix(rng):
    U = rng.standard_normal((8, 50))
    X = rng.standard_normal((8, 50))
    P2, P3 = rng.uniform(-0.5, 0.5, size=(2, 50))
    J = j_matrix(U, P2, P3)
    W = np.einsum("nij,jn->in", J, X)
    np.testing.assert_allclose(j_inverse(X, U, P2, P3), W, atol=1e-13)
    np.testing.assert_allclose(j_transform(W, U, P2, P3), X, atol=1e-13)


def test_p_inverse_matches_matrix(rng):
    X = rng.standard_normal((8, 30))
    lam = rng.uniform(-0.5, 0.5, size=30)
    Y = p_inverse(X, lam)
    np.testing.assert_allclose(np.einsum("nij,jn->in", p_matrix(lam), Y), X, atol=1e-14)


def test_good_unknown_inverse(small_grid, rng):
    diff = CentralDiff(small_grid)
    Psi = np.broadcast_to(small_grid.x1[:, None, None], small_grid.shape).copy()
    U = rng.standard_normal((8,) + small_grid.shape)
    V = rng.standard_normal((8,) + small_grid.shape)
    Phi = 0.1 * rng.standard_normal(small_grid.shape)
    W = good_unknown(V, Phi, U, Psi, diff)
    np.testing.assert_allclose(recover_from_good(W, Phi, U, Psi, diff), V, atol=1e-12)


def test_boundary_form_decouples_when_first_component_continuous(eos, rng):
    Up, Um, gp, gm = _boundary_samples(rng, 200)
    pair = lambda_fields(Up, Um)
    Xp = rng.standard_normal((8, 200))
    Xm = rng.standard_normal((8, 200))
    Xm[0] = Xp[0]
    form = boundary_quadratic_form(Xp, Xm, pair.lambda_plus, pair.lambda_minus, Up, Um, gp, gm, eos)
    scale = np.maximum(np.maximum(np.abs(form.form), np.abs(form.decoupled)), 1.0)
    assert np.max(np.abs(form.difference) / scale) <= 1e-11

    Xm[0] = Xp[0] + 1.0
    broken = boundary_quadratic_form(Xp, Xm, pair.lambda_plus, pair.lambda_minus, Up, Um, gp, gm,
                                     eos)
    assert np.max(np.abs(broken.difference)) > 1e-6


def test_block_structure_on_planar_frame(frame):
    block = p_transform_check(frame)
    assert block.hypotheses_ok
    assert block.max_deviation <= 1e-10


def test_zero_data_gives_zero_solution(frame):
    grid = frame.grid
    report = solve_linearized(frame, TwoPhaseField.zeros(grid), np.zeros((5,) + grid.boundary_shape))
    assert report.W.max_abs() == 0.0
    assert float(np.max(np.abs(report.phi))) == 0.0
    assert report.courant <= 1.0
    np.testing.assert_array_equal(report.energy, 0.0)


def test_energy_report_vacuous_for_zero_data(frame):
    grid = frame.grid
    F = TwoPhaseField.zeros(grid)
    h = np.zeros((5,) + grid.boundary_shape)
    report = solve_linearized(frame, F, h)
    energy = energy_report(report, F, h, 0, [4.0, 8.0])
    assert energy.vacuous
    assert energy.drift == 1.0
    assert [row["mu"] for row in energy.rows()] == [4.0, 8.0]


def test_frame_lambda_constant_along_x1(frame):
    for sign in SIGNS:
        lam = frame.lam[sign]
        np.testing.assert_allclose(lam, lam[:, :1], atol=0.0)
