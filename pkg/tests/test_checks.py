import numpy as np
import pytest

from stefanoc.checks import (SuiteResult, check_control_norms, check_fem_oracles, check_lift_smoothness,
                             check_reflection_bounds, extension_energy, random_smooth_control, run_all)
from stefanoc.control import DiscreteControl, continuous_norms, sample_Qn
from stefanoc.problem import ProblemData
from stefanoc.state import solve_state


def test_run_all_passes(mpd):
    results = run_all(mpd, seed=0)
    assert [r.name for r in results] == ["control norms", "lift smoothness", "fem oracles", "reflection bounds"]
    for r in results:
        assert r.passed, r.failures
        assert r.line().startswith("[PASS] ")


@pytest.mark.parametrize("suite", [check_control_norms, check_lift_smoothness])
def test_suites_pass_for_other_seeds(suite):
    assert suite(seed=7).passed


def test_fem_and_reflection_suites_without_extra_problem():
    assert check_fem_oracles().passed
    assert check_reflection_bounds().passed


def test_failed_suite_line():
    r = SuiteResult("demo", False, 3, ("x broke",))
    assert not r.passed
    assert r.line().startswith("[FAIL] demo")


def test_random_control_respects_cap(rng):
    for _ in range(10):
        v = random_smooth_control(rng, 1.0, 1.0, cap=1.5)
        assert max(continuous_norms(v)) <= 1.5
        assert v.s(0.0) == pytest.approx(1.0, abs=1e-15)


def test_extension_energy_of_constant_slice():
    pd = ProblemData.from_dict(dict(a="1", phi="3", a0=1.0, s0=0.75, T=1.0, l=2.0, delta=0.5, R=2.0))
    dsv = solve_state(DiscreteControl(np.full(5, 0.75), np.zeros(5), 1.0), pd, 8)
    big, small = extension_energy(dsv.slices[2], pd.l, pd.delta)
    assert big == pytest.approx(9 * 2.0, rel=1e-12)
    assert small == pytest.approx(9 * 0.75, rel=1e-12)


def test_extension_energy_bounded(mpd, mtruth):
    dsv = solve_state(sample_Qn(mtruth, 8), mpd, 16)
    for sl in dsv.slices:
        big, small = extension_energy(sl, mpd.l, mpd.delta)
        assert small <= big <= 2**mpd.reflection_depth * small
