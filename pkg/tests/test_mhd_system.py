import math

import numpy as np
import pytest

from core.eos_state import Eos, MhdState
from core.exceptions import DegenerateConfiguration, StabilityConditionError
from core.mhd_system import (
    assemble_augmented,
    assemble_primitive,
    lambda_fields,
    lambda_pair,
    rh_residual,
    stability_margin,
)


def _state(eos, p=1.0, v=(0, 0, 0), H=(0, 0, 0), S=0.0):
    return MhdState(p=p, v=v, H=H, S=S, eos=eos)


def test_primitive_system_symmetric_and_positive(eos, rng):
    for _ in range(20):
        U = _state(eos, p=rng.uniform(0.5, 2.0), v=tuple(rng.uniform(-1, 1, 3)),
                   H=tuple(rng.uniform(-1, 1, 3)), S=rng.uniform(-1, 1))
        system = assemble_primitive(U)
        assert system.max_asymmetry() <= 1e-12
        assert system.min_eig_A0() > 0


def test_augmented_system_symmetric_within_sonic_bound(eos, background):
    plus, minus = background
    pair = lambda_pair(plus, minus)
    for state, lam in ((plus, pair.lambda_plus), (minus, pair.lambda_minus)):
        system = assemble_augmented(state, lam)
        assert system.max_asymmetry() <= 1e-12
        assert system.min_eig_A0() > 0


def test_stability_margin_value():
    eos = Eos(gamma=1.4)
    p = 1.0 / eos.gamma
    U = _state(eos, p=p, S=math.log(p))
    assert U.rho == pytest.approx(1.0)
    assert stability_margin(U, 0.5) == pytest.approx(0.75)


def test_augmented_rejects_lambda_beyond_sonic_bound(eos):
    U = _state(eos, p=1.0 / eos.gamma, S=math.log(1.0 / eos.gamma))
    with pytest.raises(StabilityConditionError):
        assemble_augmented(U, 1.0)


def test_lambda_fields_example():
    Up = np.zeros(8)
    Um = np.zeros(8)
    Up[[0, 5, 6]] = (1.0, 2.0, 0.0)
    Um[[0, 5, 6]] = (1.0, 1.0, 1.0)
    Up[2:4] = (1.0, 1.0)
    pair = lambda_fields(Up, Um)
    assert float(pair.lambda_plus) == pytest.approx(0.0, abs=1e-14)
    assert float(pair.lambda_minus) == pytest.approx(-1.0)
    np.testing.assert_allclose(pair.residual(Up, Um), 0.0, atol=1e-14)


def test_lambda_pair_default_background(background):
    plus, minus = background
    pair = lambda_pair(plus, minus)
    assert pair.lambda_plus == pytest.approx(0.4 / 0.75)
    assert pair.lambda_minus == pytest.approx(0.2 / 0.75)
    np.testing.assert_allclose(pair.residual(plus, minus), 0.0, atol=1e-14)


def test_parallel_tangential_fields_rejected(eos):
    plus = _state(eos, H=(0, 1, 2))
    minus = _state(eos, H=(0, 2, 4), v=(0, 0.1, 0))
    with pytest.raises(DegenerateConfiguration):
        lambda_pair(plus, minus)


def test_planar_sheet_has_zero_contact_residual(background):
    plus, minus = background
    res = rh_residual(plus, minus)
    np.testing.assert_allclose(res.contact, 0.0, atol=1e-14)
    assert res.oracle_gap <= 1e-12
    assert set(res.as_dict()) >= {"mass", "energy", "normal_field"}


def test_pressure_perturbation_shows_in_total_pressure_jump(eos, background):
    plus, minus = background
    eps = 1e-3
    bumped = MhdState(p=plus.p + eps, v=plus.v, H=plus.H, S=plus.S, eos=eos)
    res = rh_residual(bumped, minus)
    assert res.contact[4] == pytest.approx(eps)
