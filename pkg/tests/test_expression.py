"""Tests del parser de expresiones oráculo."""

import math

import numpy as np
import pytest

from app.core.exceptions import ExpressionSyntaxError, UnknownIdentifierError
from app.core.expression import parse_expression, tokenize


# --------------------------------------------------------------------------- #
# Evaluación
# --------------------------------------------------------------------------- #

def test_bar_magnet_at_origin_is_zero():
    expr = parse_expression("0.5*sin(x-y)-sin(x)", ["x", "y"])
    assert expr.evaluate([0.0, 0.0]) == 0.0


def test_van_der_pol_with_x_zero():
    expr = parse_expression("10*(y-(1/3)*(x^3-x))", ["x", "y"])
    assert expr.evaluate([0.0, 1.0]) == pytest.approx(10.0)


def test_power_of_constants():
    assert parse_expression("2^3", []).evaluate([]) == 8.0


def test_power_is_right_associative():
    assert parse_expression("2^3^2", []).evaluate([]) == 512.0


def test_unary_minus_binds_looser_than_power():
    assert parse_expression("-2^2", []).evaluate([]) == -4.0


def test_precedence_of_products_over_sums():
    assert parse_expression("1 + 2*3 - 4/2", []).evaluate([]) == 5.0


def test_named_constant_and_functions():
    expr = parse_expression("cos(pi) + sqrt(abs(-4)) + log(exp(2))", [])
    assert expr.evaluate([]) == pytest.approx(-1.0 + 2.0 + 2.0)


def test_variables_bind_by_position():
    expr = parse_expression("a - b", ["b", "a"])
    # columna 0 es b, columna 1 es a
    assert expr.evaluate([1.0, 5.0]) == 4.0


def test_evaluate_batch_is_vectorized():
    expr = parse_expression("x*y", ["x", "y"])
    X = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_allclose(expr.evaluate_batch(X), [2.0, 12.0, 30.0])


def test_non_finite_results_are_not_trapped():
    assert math.isnan(parse_expression("log(-1)", []).evaluate([]))
    assert parse_expression("1/0", []).evaluate([]) == math.inf


def test_canonical_text_reparses_to_same_function():
    variables = ["x", "y"]
    expr = parse_expression("10*(y-(1/3)*(x^3-x)) - -x", variables)
    again = parse_expression(expr.to_text(), variables)
    X = np.random.default_rng(3).uniform(-5, 5, size=(50, 2))
    np.testing.assert_allclose(again.evaluate_batch(X), expr.evaluate_batch(X))


# --------------------------------------------------------------------------- #
# Errores
# --------------------------------------------------------------------------- #

def test_unknown_identifier_reports_name_and_position():
    with pytest.raises(UnknownIdentifierError) as exc:
        parse_expression("x + z", ["x"])
    assert exc.value.name == "z"
    assert exc.value.position == 4
    assert exc.value.exit_code == 2


def test_syntax_error_reports_position():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse_expression("x +* y", ["x", "y"])
    assert exc.value.position == 3


def test_unbalanced_parenthesis():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("(x + 1", ["x"])


def test_trailing_token_is_rejected():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("x y", ["x", "y"])


def test_empty_expression():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("   ", [])


def test_invalid_character():
    with pytest.raises(ExpressionSyntaxError) as exc:
        tokenize("x $ 2")
    assert exc.value.position == 2
