import math

import pytest

from config.run_config import RunConfig
from core.invariant_suite import CheckResult, InvariantSuite, SuiteReport, random_states


def test_random_states_are_admissible(rng):
    U = random_states(rng, 100)
    assert U.shape == (8, 100)
    assert U[0].min() >= 0.5


def test_report_aggregates_results():
    report = SuiteReport([CheckResult("a", True, 0.0, 1.0), CheckResult("b", False, 2.0, 1.0, "x")])
    assert not report.passed
    assert report.failed == ["b"]
    assert report.rows()[1] == {"check": "b", "passed": False, "value": 2.0, "threshold": 1.0,
                                "detail": "x"}


def test_algebraic_checks_pass(planar_config):
    suite = InvariantSuite(planar_config, seed=11, samples=200)
    report = suite.run(only=["symmetry", "lambda", "parallel_rejected", "decoupling",
                             "telescoping"])
    assert [r.name for r in report.results] == ["symmetry", "lambda", "parallel_rejected",
                                                "decoupling", "telescoping"]
    assert report.passed, report.rows()


def test_check_error_is_reported_not_raised(planar_config, monkeypatch):
    from core.exceptions import FrontDegenerate

    suite = InvariantSuite(planar_config, seed=0, samples=10)

    def check_planar():
        raise FrontDegenerate("测试")

    monkeypatch.setattr(suite, "checks", lambda: [check_planar])
    report = suite.run()
    assert report.failed == ["planar"]
    assert math.isnan(report.results[0].value)


@pytest.fixture(scope="module")
def perturbed_config():
    return RunConfig.from_text(
        "scenario = perturbed-2d\n"
        "grid.n1 = 32\n"
        "grid.n2 = 16\n"
        "time.T = 0.1\n"
    )


@pytest.mark.slow
def test_scenario_checks_on_planar_sheet(planar_config):
    report = InvariantSuite(planar_config, seed=0).run(only=["p_structure", "planar", "compat_oracle"])
    assert len(report.results) == 3
    assert report.passed, report.rows()


@pytest.mark.slow
def test_iteration_checks_on_perturbed_scenario(perturbed_config):
    names = ["linearization", "compat_oracle", "iteration_bookkeeping", "newton"]
    report = InvariantSuite(perturbed_config, seed=0).run(only=names)
    assert [r.name for r in report.results] == names
    assert report.passed, report.rows()


@pytest.mark.slow
def test_smoothing_check_on_perturbed_scenario(perturbed_config):
    report = InvariantSuite(perturbed_config, seed=4).run(only=["smoothing"])
    assert report.passed, report.rows()
    assert "迹常数漂移" in report.results[0].detail
