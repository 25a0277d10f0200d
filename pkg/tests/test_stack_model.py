"""Tests de la representación StackModel y del conjunto de entrenamiento."""

import math

import numpy as np
import pytest

from app.core.exceptions import DimensionError, ValidationError
from app.models.stack_model import (
    OPERATORS_BY_SYMBOL,
    StackModel,
    TrainingSet,
    Var,
    build_registry,
    consumption_ranges,
    operand_demand,
    required_terminals,
    validate_bounds,
)
from tests.conftest import build_model


# --------------------------------------------------------------------------- #
# Intérprete
# --------------------------------------------------------------------------- #

def test_single_addition():
    model = build_model(["+"], ["x0", 2.0])
    assert model.output([[3.0]])[0] == 5.0


def test_sine_of_zero():
    assert build_model(["sin"], ["x0"]).output([[0.0]])[0] == 0.0


def test_chained_operators_use_eval_stack_first():
    # (x0 + x1) * 2
    model = build_model(["+", "*"], ["x0", "x1", 2.0])
    assert model.output([[1.0, 2.0]])[0] == 6.0


def test_model_without_operators_returns_first_terminal():
    model = build_model([], ["x1", 7.0])
    np.testing.assert_array_equal(model.output([[1.0, 4.0], [2.0, 5.0]]), [4.0, 5.0])


def test_constant_model_broadcasts():
    model = build_model(["sin"], [0.0])
    assert model.output(np.zeros((4, 1))).shape == (4,)


def test_operand_underflow_gives_nan():
    model = build_model(["+"], ["x0"])
    assert math.isnan(model.output([[1.0]])[0])


def test_predict_applies_alignment():
    model = build_model([], ["x0"])
    model.align = (1.0, 3.0)
    np.testing.assert_allclose(model.predict([[1.0], [2.0]]), [4.0, 7.0])


# --------------------------------------------------------------------------- #
# Demanda de operandos
# --------------------------------------------------------------------------- #

def test_chain_of_additions_needs_arity_then_arity_minus_one():
    ops = [OPERATORS_BY_SYMBOL["+"]] * 3
    assert operand_demand(ops) == [2, 1, 1]
    assert required_terminals(ops) == 4
    assert consumption_ranges(ops) == [(0, 2), (2, 3), (3, 4)]


def test_unary_after_binary_needs_no_terminal():
    ops = [OPERATORS_BY_SYMBOL["*"], OPERATORS_BY_SYMBOL["sin"]]
    assert operand_demand(ops) == [2, 0]


def test_empty_operator_stack_needs_one_terminal():
    assert required_terminals([]) == 1


def test_feasibility():
    assert build_model(["+"], ["x0", "x1"]).is_feasible
    assert not build_model(["+"], ["x0"]).is_feasible


# --------------------------------------------------------------------------- #
# Presentación y serialización
# --------------------------------------------------------------------------- #

def test_to_infix_with_variable_names():
    model = build_model(["+", "*"], ["x0", "x1", 2.0])
    assert model.to_infix(["a", "b"]) == "((a + b) * 2.0)"


def test_to_infix_wraps_alignment():
    model = build_model(["sin"], ["x0"])
    model.align = (0.5, 2.0)
    assert model.to_infix() == "2.0*sin(x0) + 0.5"
    assert model.to_infix(aligned=False) == "sin(x0)"


def test_complexity_counts_both_stacks():
    assert build_model(["+", "*"], ["x0", "x1", 2.0]).complexity == 5


def test_serialization_preserves_structure_and_cache():
    model = build_model(["pow", "log"], ["x1", 2.5])
    model.fitness_error = 0.25
    model.align = (1.0, -2.0)
    restored = StackModel.from_dict(model.to_dict())
    assert restored.structural_key() == model.structural_key()
    assert restored.fitness_error == 0.25
    assert restored.align == (1.0, -2.0)


def test_deserialize_unknown_operator():
    with pytest.raises(ValidationError):
        StackModel.from_dict({"ops": ["tanh"], "data": [{"var": 0}]})


def test_copy_is_independent():
    model = build_model(["+"], ["x0", 1.0])
    clone = model.copy()
    clone.data_stack[1] = Var(0)
    assert model.data_stack[1] == 1.0


def test_registry_rejects_unknown_symbol():
    with pytest.raises(ValidationError):
        build_registry(["+", "tanh"])


# --------------------------------------------------------------------------- #
# TrainingSet
# --------------------------------------------------------------------------- #

def test_append_clamps_to_bounds():
    data = TrainingSet([(0.0, 6.0)])
    stored = data.append([7.2], 1.0)
    assert stored[0] == 6.0
    assert len(data) == 1


def test_contains_uses_coordinate_tolerance():
    data = TrainingSet([(0.0, 1.0), (0.0, 1.0)], [[0.25, 0.5]], [1.0])
    assert data.contains([0.25, 0.5 + 1e-12])
    assert not data.contains([0.25, 0.5 + 1e-6])


def test_row_dimension_mismatch():
    data = TrainingSet([(0.0, 1.0), (0.0, 1.0)])
    with pytest.raises(DimensionError):
        data.append([0.5], 1.0)


@pytest.mark.parametrize("bounds", [[(1.0, 1.0)], [(2.0, 1.0)], [(0.0, math.inf)], []])
def test_invalid_bounds(bounds):
    with pytest.raises(ValidationError):
        validate_bounds(bounds)
