import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanoc.checks import manufactured_problem
from stefanoc.control import AnalyticControl
from stefanoc.expr import parse_expression
from stefanoc.problem import (ProblemData, gauss_legendre, steklov_average, sup_coefficients,
                              trace_averages, validate_data)


def base(**kw):
    d = dict(a="1", phi="0", a0=1.0, s0=1.0, T=1.0, l=2.0, delta=0.5, R=2.0)
    d.update(kw)
    return ProblemData.from_dict(d)


def test_smooth_data_passes_validation():
    rep = validate_data(base(b="sin(x)", f="x*t", gamma="1"), samples=11)
    assert rep.passed and rep.violations == ()


def test_ellipticity_violation_reports_worst_value():
    rep = validate_data(base(a="0.5"))
    assert not rep.passed
    (v,) = rep.violations
    assert v.label == "ellipticity"
    assert v.worst == 0.5


def test_singular_source_is_flagged():
    rep = validate_data(base(f="1/(x-0.5)", l=1.0, s0=1.0), samples=21)
    assert any(v.label == "non-finite sample of f" for v in rep.violations)


def test_derivative_cap_is_optional():
    pd = base(a="1 + 10*x")
    assert validate_data(pd).passed
    rep = validate_data(pd, dadx_cap=5.0)
    assert [v.label for v in rep.violations] == ["bounded da/dx"]
    assert rep.violations[0].worst == pytest.approx(10.0)


def test_validation_does_not_mutate():
    pd = base(a="0.2")
    before = pd.to_dict()
    validate_data(pd)
    assert pd.to_dict() == before


@pytest.mark.parametrize("kw", [dict(a0=0.0), dict(delta=1.5), dict(s0=3.0), dict(T=0.0), dict(R=-1.0),
                                dict(beta0=0.0, beta1=0.0), dict(beta0=-1.0)])
def test_invalid_constants_rejected(kw):
    with pytest.raises(ValueError):
        base(**kw)


def test_missing_constant_is_named():
    d = dict(a="1", a0=1.0, s0=1.0, T=1.0, l=2.0, R=2.0)
    with pytest.raises(KeyError, match="delta"):
        ProblemData.from_dict(d)


def test_round_trip_through_dict():
    pd = manufactured_problem()
    assert ProblemData.from_dict(pd.to_dict()) == pd


def test_reflection_depth():
    assert base().reflection_depth == 1 + math.floor(math.log2(2.0 / 0.5))


def test_steklov_constant():
    f = parse_expression("3.5", arity=1, var="t")
    for k in range(1, 6):
        assert steklov_average(f, k, 0.2) == pytest.approx(3.5, rel=1e-15)


def test_steklov_linear_midpoint():
    f = parse_expression("t", arity=1, var="t")
    assert steklov_average(f, 2, 0.5) == pytest.approx(0.75, rel=1e-15)


def test_steklov_quadratic_exact():
    f = parse_expression("t^2", arity=1, var="t")
    assert steklov_average(f, 2, 0.5) == pytest.approx(7 / 12, rel=1e-14)


def test_steklov_space_time_shape():
    f = parse_expression("x*t")
    x = np.array([0.0, 1.0, 2.0])
    out = steklov_average(f, 1, 1.0, x)
    assert out.shape == (3,)
    np.testing.assert_allclose(out, 0.5 * x, rtol=1e-14)


def test_steklov_argument_checks():
    with pytest.raises(ValueError):
        steklov_average(parse_expression("t", arity=1, var="t"), 1, 0.1, x=0.5)
    with pytest.raises(ValueError):
        steklov_average(parse_expression("x"), 1, 0.1)
    with pytest.raises(ValueError):
        steklov_average(parse_expression("x"), 0, 0.1, 0.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.integers(1, 20), st.floats(0.01, 1.0))
def test_steklov_exact_for_degree_seven(coeffs, k, tau):
    poly = np.polynomial.Polynomial(coeffs)
    text = " + ".join(f"({c!r})*t^{i}" for i, c in enumerate(coeffs))
    f = parse_expression(text, arity=1, var="t")
    anti = poly.integ()
    exact = (anti(k * tau) - anti((k - 1) * tau)) / tau
    scale = max(1.0, float(np.sum(np.abs(coeffs)) * max(1.0, k * tau) ** 7))
    assert abs(steklov_average(f, k, tau) - exact) <= 1e-13 * scale


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 10))
def test_steklov_linearity(alpha, beta, k):
    f = parse_expression("sin(3*t)", arity=1, var="t")
    g = parse_expression("exp(t)", arity=1, var="t")
    h = parse_expression(f"({alpha!r})*sin(3*t) + ({beta!r})*exp(t)", arity=1, var="t")
    lhs = steklov_average(h, k, 0.1)
    rhs = alpha * steklov_average(f, k, 0.1) + beta * steklov_average(g, k, 0.1)
    assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


def test_trace_averages_constant_gamma():
    s = AnalyticControl("1 + t/4", "0", T=1.0, ds=lambda t: 0.25 + 0 * np.asarray(t))
    gs, ch = trace_averages(s, parse_expression("2"), parse_expression("0"), 3, 0.1)
    assert gs == pytest.approx(0.5, rel=1e-15)
    assert ch == 0.0


def test_trace_averages_linear_gamma():
    tau = 0.3
    s = AnalyticControl("1 + t", "0", T=1.0, ds=lambda t: 1.0 + 0 * np.asarray(t))
    gs, _ = trace_averages(s, parse_expression("x"), parse_expression("0"), 1, tau)
    assert gs == pytest.approx(1 + tau / 2, rel=1e-15)


def test_trace_averages_vectorised():
    s = AnalyticControl("1 + t^2", "0", T=1.0, ds=lambda t: 2 * np.asarray(t))
    g, c = parse_expression("x*t"), parse_expression("x + t")
    ks = np.arange(1, 6)
    gs, ch = trace_averages(s, g, c, ks, 0.2)
    for i, k in enumerate(ks):
        a, b = trace_averages(s, g, c, int(k), 0.2)
        assert gs[i] == pytest.approx(a, rel=1e-15)
        assert ch[i] == pytest.approx(b, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(1, 10))
def test_trace_fundamental_theorem(coeffs, k):
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    s = AnalyticControl(lambda t: poly(np.asarray(t)), "0", T=10.0, ds=lambda t: dpoly(np.asarray(t)))
    tau = 0.25
    gs, _ = trace_averages(s, parse_expression("1"), parse_expression("0"), k, tau)
    expected = (poly(k * tau) - poly((k - 1) * tau)) / tau
    assert gs == pytest.approx(expected, abs=1e-12 * max(1.0, np.abs(coeffs).sum() * (k * tau) ** 3))


def test_gauss_rule_on_unit_interval():
    x, w = gauss_legendre()
    assert w.sum() == pytest.approx(1.0, rel=1e-15)
    assert np.all((x > 0) & (x < 1))


def test_sup_coefficients():
    pd = base(a="2 + x", b="-3", c="t")
    assert sup_coefficients(pd) == pytest.approx(4.0)
