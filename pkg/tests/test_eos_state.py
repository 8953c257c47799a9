import math

import numpy as np
import pytest

from core.eos_state import (
    Eos,
    Grid,
    MhdState,
    TwoPhaseField,
    derived_fields,
    eos_eval,
)
from core.exceptions import DomainError, ParameterError


def test_eos_rejects_gamma_not_above_one():
    with pytest.raises(ParameterError):
        Eos(gamma=1.0)
    with pytest.raises(ParameterError):
        Eos(gamma=0.9)


def test_eos_eval_reference_values():
    eos = Eos(gamma=2.0)
    values = eos_eval(eos, 1.0, 0.0)
    assert values.p == pytest.approx(1.0)
    assert values.c2 == pytest.approx(2.0)
    assert values.e == pytest.approx(1.0)


def test_eos_eval_rejects_nonpositive_density(eos):
    with pytest.raises(DomainError):
        eos_eval(eos, np.array([1.0, 0.0]), 0.0)


def test_density_inverts_pressure(eos):
    rho = np.array([0.3, 1.0, 2.5])
    S = np.array([-0.5, 0.0, 0.7])
    p = eos.pressure(rho, S)
    np.testing.assert_allclose(eos.density(p, S), rho, rtol=1e-13)
    with pytest.raises(DomainError):
        eos.density(-1.0, 0.0)


def test_state_rejects_nonpositive_pressure(eos):
    with pytest.raises(DomainError):
        MhdState(p=0.0, v=(0, 0, 0), H=(0, 0, 0), S=0.0, eos=eos)


def test_state_derived_quantities(eos, background):
    plus, _ = background
    assert plus.rho == pytest.approx(1.0)
    assert plus.c2 == pytest.approx(1.4)
    assert plus.q == pytest.approx(1.0 + 0.5 * 1.25)
    assert plus.sonic_bound == pytest.approx(1.4 / (1.4 + 1.25))
    np.testing.assert_array_equal(MhdState.from_vector(plus.as_vector(), eos).as_vector(),
                                  plus.as_vector())


def test_background_total_pressure_is_continuous(background):
    plus, minus = background
    assert plus.q == pytest.approx(minus.q)
    assert plus.q == pytest.approx(1.625)


def test_derived_fields_match_pointwise(eos, background):
    plus, minus = background
    U = np.stack([plus.as_vector(), minus.as_vector()], axis=1)
    d = derived_fields(U, eos)
    assert d.rho[1] == pytest.approx(minus.rho)
    assert d.c2[0] == pytest.approx(plus.c2)
    np.testing.assert_allclose(d.q, [plus.q, minus.q])


def test_grid_spacings_and_validation():
    grid = Grid(10, 8, 1, 2.0, 2 * math.pi, 2 * math.pi, 1.0, 5)
    assert grid.dx1 == pytest.approx(0.2)
    assert grid.dt == pytest.approx(0.25)
    assert grid.shape == (5, 11, 8, 1)
    assert grid.boundary_shape == (5, 8, 1)
    assert grid.x1[-1] == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        Grid(0, 8, 1, 2.0, 1.0, 1.0, 1.0, 5)
    with pytest.raises(ParameterError):
        Grid(4, 8, 1, 2.0, 1.0, 1.0, 1.0, 1)


def test_periodic_grid_spacing():
    grid = Grid(15, 16, 1, 2 * math.pi, 2 * math.pi, 2 * math.pi, 1.0, 2, periodic_x1=True)
    assert grid.dx1 == pytest.approx(2 * math.pi / 16)


def test_two_phase_field_arithmetic(small_grid):
    a = TwoPhaseField.zeros(small_grid)
    b = a.map(lambda u: u + 2.0)
    c = (b + b).scale(0.25) - a
    assert c.max_abs() == pytest.approx(1.0)
    np.testing.assert_array_equal(c[1], c.plus)
    np.testing.assert_array_equal(c[-1], c.minus)
    Up, Um = c.boundary()
    assert Up.shape == (8,) + small_grid.boundary_shape


def test_two_phase_field_shape_mismatch(small_grid):
    with pytest.raises(ParameterError):
        TwoPhaseField(np.zeros((8,) + small_grid.shape), np.zeros((8, 1, 1, 1, 1)), small_grid)


def test_past_violation_measures_initial_level(small_grid):
    field = TwoPhaseField.zeros(small_grid)
    assert field.past_violation() == 0.0
    field.plus[:, 0] = 0.5
    assert field.past_violation() == pytest.approx(0.5)
