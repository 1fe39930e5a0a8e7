import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanoc.expr import (ArityError, DomainError, ExpressionSyntaxError, UnknownIdentifierError,
                           evaluate, parse_expression)


def test_two_variable_arithmetic():
    assert evaluate(parse_expression("1 + 0.1*x*t"), 2, 3) == pytest.approx(1.6, abs=1e-15)


def test_one_variable_polynomial():
    assert evaluate(parse_expression("x^2 + x", arity=1), 2) == 6


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse_expression("x + y")


def test_time_variable_for_arity_one():
    f = parse_expression("2*t", arity=1, var="t")
    assert f(1.5) == 3.0
    with pytest.raises(UnknownIdentifierError):
        parse_expression("x", arity=1, var="t")


@pytest.mark.parametrize("text, args, expected", [
    ("sin(x)", (0.0, 0.0), 0.0),
    ("exp(-t)*cos(x)", (0.0, 0.0), 1.0),
    ("sqrt(abs(x))", (-4.0, 0.0), 2.0),
    ("log(exp(x))", (1.25, 0.0), 1.25),
])
def test_builtin_functions(text, args, expected):
    assert evaluate(parse_expression(text), *args) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("text, args", [("x/t", (1.0, 0.0)), ("log(x)", (0.0, 1.0)),
                                        ("log(x)", (-1.0, 1.0)), ("sqrt(x)", (-1.0, 0.0))])
def test_domain_errors(text, args):
    with pytest.raises(DomainError):
        evaluate(parse_expression(text), *args)


def test_domain_error_is_arithmetic():
    with pytest.raises(ArithmeticError):
        parse_expression("1/x")(0.0, 0.0)


def test_precedence_and_associativity():
    assert parse_expression("2+3*4")(0, 0) == 14
    assert parse_expression("2^3^2")(0, 0) == 512
    assert parse_expression("8-3-2")(0, 0) == 3
    assert parse_expression("8/4/2")(0, 0) == 1
    assert parse_expression("-2^2")(0, 0) == -4
    assert parse_expression("2**3")(0, 0) == 8


def test_arity_mismatch():
    f = parse_expression("x^2", arity=1)
    with pytest.raises(ArityError):
        evaluate(f, 1.0, 2.0)
    with pytest.raises(ArityError):
        evaluate(parse_expression("x*t"), 1.0)
    with pytest.raises(ArityError):
        f(1.0, 2.0)


@pytest.mark.parametrize("bad", ["1+*2", "(x", "x)", "", "sin x", "3x", "1..2", "x $ 2"])
def test_syntax_errors_report_position(bad):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(bad)
    assert info.value.pos >= 0


def test_unknown_function_is_rejected():
    with pytest.raises(UnknownIdentifierError):
        parse_expression("tan(x)")


def test_vectorised_evaluation_broadcasts():
    f = parse_expression("x + t")
    out = f(np.array([0.0, 1.0])[:, None], np.array([10.0, 20.0, 30.0]))
    assert out.shape == (2, 3)
    assert out[1, 2] == 31.0


def test_constant_detection():
    assert parse_expression("2*3").is_constant
    assert not parse_expression("2*x").is_constant


def test_numbers_accepted_as_text():
    assert parse_expression(2.5)(0.0, 0.0) == 2.5


_leaves = st.sampled_from(["x", "t", "1", "2.5", "0.3"])


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"sin({c})"),
        children.map(lambda c: f"cos({c})"),
        children.map(lambda c: f"exp(0.1*{c})"),
    )


expressions = st.recursive(_leaves, _combine, max_leaves=12)


@settings(max_examples=60, deadline=None)
@given(expressions)
def test_print_parse_round_trip(text):
    f = parse_expression(text)
    g = parse_expression(f.to_text())
    rng = np.random.default_rng(7)
    xs, ts = rng.uniform(-2, 2, 100), rng.uniform(0, 3, 100)
    assert np.array_equal(f(xs, ts), g(xs, ts))


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_evaluation_is_deterministic(x, t):
    f = parse_expression("sin(x)*exp(t/3) + x^2 - t")
    a, b = f(x, t), f(x, t)
    assert a == b and math.isfinite(a)
    assert a == pytest.approx(math.sin(x) * math.exp(t / 3) + x * x - t, rel=1e-14, abs=1e-13)
