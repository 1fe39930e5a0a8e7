import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stefanoc.checks import manufactured_problem, random_smooth_control
from stefanoc.control import (AnalyticControl, DiscreteControl, check_admissible, continuous_norms,
                              default_control, lift_Pn, lipschitz_check, norm_w21, norm_w22, sample_Qn)


def test_w22_constant():
    for n in (1, 4, 17):
        assert norm_w22(np.full(n + 1, 1.7), 1.0 / n) == pytest.approx(1.7**2, rel=1e-14)


def test_w22_hand_example():
    assert norm_w22([1.0, 1.5, 2.0], 0.5) == pytest.approx(2.625, rel=1e-15)


def test_w22_zero():
    assert norm_w22([0.0, 0.0, 0.0], 0.5) == 0.0


def test_w21_hand_example():
    assert norm_w21([0.0, 1.0, 0.0], 0.5) == pytest.approx(4.5, rel=1e-15)


def test_w21_constant_and_zero():
    assert norm_w21(np.full(9, -3.0), 1 / 8) == pytest.approx(9.0, rel=1e-14)
    assert norm_w21([0.0, 0.0], 1.0) == 0.0


def test_norms_reject_short_sequences():
    with pytest.raises(ValueError):
        norm_w22([1.0], 1.0)
    with pytest.raises(ValueError):
        norm_w21([1.0], 1.0)


def test_w22_single_step_has_no_second_difference():
    assert norm_w22([1.0, 3.0], 1.0) == pytest.approx(1.0 + 4.0)


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(2, 40), elements=st.floats(-10, 10)), st.floats(-4, 4), st.floats(0.01, 1))
def test_norms_homogeneous_degree_two(seq, alpha, tau):
    for norm in (norm_w22, norm_w21):
        base = norm(seq, tau)
        assert norm(alpha * seq, tau) == pytest.approx(alpha**2 * base, rel=1e-12, abs=1e-300)


def test_sampling_linear():
    dc = sample_Qn(AnalyticControl("1 + t", "0", T=1.0), 2)
    np.testing.assert_array_equal(dc.s_vals, [1.0, 1.5, 2.0])
    np.testing.assert_array_equal(dc.g_vals, [0.0, 0.0, 0.0])


def test_sampling_constant():
    dc = sample_Qn(AnalyticControl(1.25, 0.0, T=2.0), 5)
    assert np.all(dc.s_vals == 1.25)


def test_discrete_control_validation():
    with pytest.raises(ValueError):
        DiscreteControl([1.0, 2.0], [0.0], 1.0)
    with pytest.raises(ValueError):
        DiscreteControl([1.0], [0.0], 1.0)
    with pytest.raises(ValueError):
        DiscreteControl([1.0, np.nan], [0.0, 0.0], 1.0)
    dc = DiscreteControl([1.0, 2.0], [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        dc.s_vals[0] = 3.0


def test_lift_hand_example():
    lift = lift_Pn(DiscreteControl([1.0, 1.5, 2.0], [0.0, 1.0, 0.0], 1.0))
    assert lift.s(1.0) == pytest.approx(1.75, abs=1e-15)
    assert lift.s(0.5) == pytest.approx(1.25, abs=1e-15)
    assert lift.s(0.0) == 1.0
    assert lift.g(0.25) == pytest.approx(0.5, abs=1e-15)


def test_lift_constant():
    lift = lift_Pn(DiscreteControl(np.full(7, 1.3), np.zeros(7), 1.0))
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(lift.s(t), 1.3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(lift.ds(t), 0.0, atol=1e-12)


def test_lift_single_step_uses_first_piece():
    lift = lift_Pn(DiscreteControl([1.0, 2.0], [0.0, 0.0], 1.0))
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(lift.s(t), 1.0 + t**2 / 2, rtol=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 60), st.floats(0.1, 5.0), st.integers(0, 2**31 - 1))
def test_lift_c1_midpoints_and_flux(n, T, seed):
    rng = np.random.default_rng(seed)
    dc = DiscreteControl(1 + rng.random(n + 1), rng.normal(size=n + 1), T)
    lift = lift_Pn(dc)
    k = np.arange(1, n)
    tk = dc.times[1:-1]
    assert np.max(np.abs(lift.piece_eval(k, tk, 0) - lift.piece_eval(k + 1, tk, 0))) <= 1e-12
    assert np.max(np.abs(lift.piece_eval(k, tk, 1) - lift.piece_eval(k + 1, tk, 1))) <= 1e-12
    mids = 0.5 * (dc.s_vals[:-1] + dc.s_vals[1:])
    np.testing.assert_array_equal(lift.s(dc.times[1:]), mids)
    assert lift.s(0.0) == dc.s_vals[0]
    np.testing.assert_array_equal(lift.g(dc.times), dc.g_vals)


def test_lift_derivatives_match_finite_differences(rng):
    dc = DiscreteControl(1 + rng.random(9), rng.normal(size=9), 1.0)
    lift = lift_Pn(dc)
    t = np.linspace(0.01, 0.99, 37)
    t = t[np.min(np.abs(t[:, None] - dc.times[None, :]), axis=1) > 1e-3]
    h = 1e-7
    np.testing.assert_allclose(lift.ds(t), (lift.s(t + h) - lift.s(t - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(lift.d2s(t), (lift.ds(t + h) - lift.ds(t - h)) / (2 * h), atol=1e-5)
    np.testing.assert_allclose(lift.dg(t), (lift.g(t + h) - lift.g(t - h)) / (2 * h), atol=1e-6)


def test_continuous_norms_closed_form():
    v = AnalyticControl("1 + t", "t", T=1.0, ds=lambda t: 1 + 0 * np.asarray(t),
                        d2s=lambda t: 0 * np.asarray(t), dg=lambda t: 1 + 0 * np.asarray(t))
    w22, w21 = continuous_norms(v)
    assert w22 == pytest.approx(7 / 3 + 1, rel=1e-14)
    assert w21 == pytest.approx(1 / 3 + 1, rel=1e-14)


def test_continuous_norms_finite_difference_derivatives():
    v = AnalyticControl("sin(t)", "cos(t)", T=1.0)
    w22, w21 = continuous_norms(v)
    # sin^2 + cos^2 + sin^2 and cos^2 + sin^2 integrated over [0, 1]
    exact22 = 1 + (0.5 - np.sin(2) / 4)
    assert w22 == pytest.approx(exact22, rel=1e-7)
    assert w21 == pytest.approx(1.0, rel=1e-8)


def test_admissible_constant_control():
    pd = manufactured_problem()
    rep = check_admissible(default_control(pd, 8), pd)
    assert rep.in_set and rep.w22_s == pytest.approx(1.0) and rep.w21_g == 0.0


def test_bound_violation():
    pd = manufactured_problem()
    s = np.full(9, 1.0)
    s[4] = pd.delta / 2
    rep = check_admissible(DiscreteControl(s, np.zeros(9), 1.0), pd)
    assert not rep.bounds_ok and not rep.in_set


def test_norm_violation_by_scaling():
    pd = manufactured_problem()
    dc = DiscreteControl(np.linspace(1, 1.25, 9), np.ones(9), 1.0)
    assert check_admissible(dc, pd).norm_ok
    big = dc.replace(g_vals=10 * pd.R * dc.g_vals)
    assert not check_admissible(big, pd).norm_ok


def test_epsilon_widens_the_ball():
    pd = manufactured_problem()
    dc = DiscreteControl(np.ones(9), np.full(9, 2.1), 1.0)
    assert not check_admissible(dc, pd).norm_ok
    assert check_admissible(dc, pd, epsilon=0.2).norm_ok


def test_continuous_admissibility_checks_initial_value(mtruth):
    pd = manufactured_problem()
    assert check_admissible(mtruth, pd).in_set
    shifted = AnalyticControl("1.1 + t/4", "1", T=1.0)
    assert not check_admissible(shifted, pd).bounds_ok


def test_lipschitz_examples():
    assert lipschitz_check(DiscreteControl(np.ones(5), np.zeros(5), 1.0), 0.1)
    assert lipschitz_check(sample_Qn(AnalyticControl("1 + t", 0, T=1.0), 16), 1.0)
    s = np.ones(9)
    s[5:] += 10 / 8
    assert not lipschitz_check(DiscreteControl(s, np.zeros(9), 1.0), 1.0)
    with pytest.raises(ValueError):
        lipschitz_check(DiscreteControl(np.ones(5), np.zeros(5), 1.0), 0.0)


def test_lift_norm_excess_vanishes_under_refinement():
    # s'(0) = 0 keeps the first-piece curvature term of order tau
    v = AnalyticControl("1 + 0.2*(1 - cos(3*t))", "cos(2*t)", T=1.0)
    excess = []
    for n in (8, 16, 32, 64, 128):
        dc = sample_Qn(v, n)
        bound = max(norm_w22(dc.s_vals, dc.tau), norm_w21(dc.g_vals, dc.tau))
        excess.append(max(continuous_norms(lift_Pn(dc))) - bound)
    assert abs(excess[-1]) < abs(excess[0])
    assert abs(excess[-1]) < 0.05


def test_round_trip_sup_error_decreases():
    v = AnalyticControl("1 + 0.3*sin(2*t) + 0.1*t^2", "0", T=1.0)
    t = np.linspace(0, 1, 4001)
    errs = [np.max(np.abs(lift_Pn(sample_Qn(v, n)).s(t) - v.s(t))) for n in (8, 16, 32, 64, 128)]
    for a, b in zip(errs, errs[1:]):
        assert b <= 1.1 * a


@pytest.mark.parametrize("n", [8, 32, 128])
def test_sampling_inequality_random(n):
    rng = np.random.default_rng(n)
    R, eps = 2.0, 0.25
    cap = (R - eps) ** 2
    for _ in range(20):
        dc = sample_Qn(random_smooth_control(rng, 1.0, 1.0, cap), n)
        lhs = max(norm_w22(dc.s_vals, dc.tau), norm_w21(dc.g_vals, dc.tau))
        assert lhs <= cap + R**2 * dc.tau + 1e-10
