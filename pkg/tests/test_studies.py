import math

import numpy as np
import pytest

from core.studies import (
    divergence_study,
    energy_study,
    linearization_study,
    manufactured_study,
    MANUFACTURED_CENTER,
    MANUFACTURED_WIDTH,
    planar_preservation,
    refinement_orders,
    spectral_box,
    _profile,
    stability_study,
)


def test_refinement_orders():
    orders = refinement_orders([1.0, 0.25, 0.0625])
    assert math.isnan(orders[0])
    assert orders[1:] == pytest.approx([2.0, 2.0])
    assert math.isnan(refinement_orders([1.0, 0.0])[1])


def test_spectral_box_is_periodic_in_time():
    grid = spectral_box(16)
    assert grid.periodic_x1
    assert grid.dt * grid.nt == pytest.approx(2 * math.pi)
    assert grid.dx1 == pytest.approx(grid.dx2)


def test_zero_forcing_manufactured_study_is_exact(eos):
    study = manufactured_study(eos, levels=(8,), zero_forcing=True)
    row = study.rows[0]
    assert row.error_W == 0.0
    assert row.error_phi == 0.0


def test_planar_sheet_is_preserved(eos):
    result = planar_preservation(eos, steps=20, shape=(8, 8, 4))
    assert result.max_residual <= 1e-10


def test_manufactured_profile_is_resolved_on_coarsest_level():
    # N = 16, x1_max = 3：中心差分二阶导与解析二阶导的相对 L2 偏差
    dx = 3.0 / 16
    x = np.arange(16) * dx
    g, _ = _profile(x)
    exact = ((x - MANUFACTURED_CENTER) ** 2 / MANUFACTURED_WIDTH ** 4 - 1.0 / MANUFACTURED_WIDTH ** 2) * g
    discrete = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / dx ** 2
    rel = np.linalg.norm(discrete - exact[1:-1]) / np.linalg.norm(exact[1:-1])
    assert rel <= 0.05


@pytest.mark.slow
def test_manufactured_solution_converges(eos):
    study = manufactured_study(eos, levels=(16, 32))
    assert study.min_order >= 0.8
    assert all(r.bc_residual <= 1e-10 for r in study.rows)


@pytest.mark.slow
def test_energy_constant_is_stable_in_mu(eos):
    report = energy_study(eos, n=16, T=0.5)
    assert not report.vacuous
    assert all(c > 0 for c in report.c0)
    assert [row["mu"] for row in report.rows()] == list(report.mu)


@pytest.mark.slow
def test_divergence_of_magnetic_field_converges(eos):
    rows = divergence_study(eos, levels=(16, 32), T=0.25)
    assert rows[1].div_l2 < rows[0].div_l2


@pytest.mark.slow
def test_discrete_energy_bounded(eos, rng):
    result = stability_study(eos, rng, n=16, T=0.5)
    assert np.all(np.isfinite(result.energy))
    assert result.growth < 10.0


@pytest.mark.slow
def test_linearization_is_second_order(eos, rng):
    study = linearization_study(eos, rng, configurations=3, n=12)
    assert study.min_slope >= 1.9
    assert len(study.rows()) == 3 * 4
