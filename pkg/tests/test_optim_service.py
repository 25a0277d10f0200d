"""Tests de los optimizadores acotados y del reintento en sub-regiones."""

import numpy as np
import pytest

from app.models.al_models import OptimizerKind
from app.services.optim_service import (
    BoundedObjective,
    _reflect,
    differential_evolution,
    is_taken,
    local_minimize,
    maximize,
    random_subregion,
    subregion_retry,
)


def _quadratic(X):
    return -(X[:, 0] - 2.0) ** 2


def _constant(X):
    return np.zeros(X.shape[0])


def _sphere(X):
    return -np.sum(X * X, axis=1)


def _rastrigin(X):
    return -(10.0 * X.shape[1] + np.sum(X * X - 10.0 * np.cos(2 * np.pi * X), axis=1))


# --------------------------------------------------------------------------- #
# Objetivo
# --------------------------------------------------------------------------- #

def test_non_finite_values_read_as_minus_infinity():
    obj = BoundedObjective(lambda X: np.log(X[:, 0] - 1.0), [(0.0, 5.0)])
    assert obj.value([0.5]) == -np.inf


def test_is_taken_with_rows():
    taken = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert is_taken([3.0, 4.0], taken)
    assert not is_taken([3.0, 4.1], taken)
    assert not is_taken([3.0, 4.0], None)


# --------------------------------------------------------------------------- #
# Nelder-Mead
# --------------------------------------------------------------------------- #

def test_local_finds_quadratic_peak():
    x = local_minimize(BoundedObjective(_quadratic, [(0.0, 5.0)]), [0.0])
    assert x[0] == pytest.approx(2.0, abs=1e-4)


def test_local_constant_objective_returns_start():
    x = local_minimize(BoundedObjective(_constant, [(0.0, 5.0), (0.0, 5.0)]), [1.5, 2.5])
    np.testing.assert_array_equal(x, [1.5, 2.5])


def test_local_from_boundary_moves_inside():
    x = local_minimize(BoundedObjective(_quadratic, [(0.0, 5.0)]), [5.0])
    assert 0.0 < x[0] < 5.0
    assert x[0] == pytest.approx(2.0, abs=1e-3)


def test_maximize_local_stays_in_box(rng):
    obj = BoundedObjective(lambda X: X.sum(axis=1), [(0.0, 1.0), (-1.0, 1.0)])
    x = maximize(obj, OptimizerKind.LOCAL, rng)
    assert np.all(x >= obj.lower) and np.all(x <= obj.upper)


# --------------------------------------------------------------------------- #
# Evolución diferencial
# --------------------------------------------------------------------------- #

def test_reflection_folds_back_into_box():
    lower, upper = np.array([0.0]), np.array([5.0])
    X = np.array([[-1.0], [7.0], [12.0], [0.0], [2.5], [5.0]])
    np.testing.assert_allclose(_reflect(X, lower, upper)[:, 0], [1.0, 3.0, 2.0, 0.0, 2.5, 5.0])


def test_reflection_is_per_coordinate():
    X = np.array([[-0.5, 11.0]])
    folded = _reflect(X, np.array([0.0, 10.0]), np.array([1.0, 20.0]))
    np.testing.assert_allclose(folded, [[0.5, 11.0]])


def test_de_stays_in_box_on_noisy_objective():
    noise = np.random.default_rng(0)
    obj = BoundedObjective(lambda X: noise.normal(size=X.shape[0]), [(-1.0, 2.0), (3.0, 4.0)])
    for seed in range(10):
        x = differential_evolution(obj, np.random.default_rng(seed), budget=15)
        assert np.all(x >= obj.lower) and np.all(x <= obj.upper)


def test_de_monotone_objective_reaches_upper_bound(rng):
    x = differential_evolution(BoundedObjective(lambda X: X[:, 0], [(0.0, 5.0)]), rng)
    assert x[0] == pytest.approx(5.0, abs=1e-3)


def test_de_is_reproducible():
    obj = BoundedObjective(_rastrigin, [(-5.12, 5.12)] * 2)
    a = differential_evolution(obj, np.random.default_rng(3), budget=20)
    b = differential_evolution(obj, np.random.default_rng(3), budget=20)
    np.testing.assert_array_equal(a, b)


@pytest.mark.slow
def test_de_sphere_in_three_dimensions():
    obj = BoundedObjective(_sphere, [(-5.0, 5.0)] * 3)
    hits = sum(
        obj.value(differential_evolution(obj, np.random.default_rng(seed), budget=300)) > -1e-6
        for seed in range(100)
    )
    assert hits >= 95


@pytest.mark.slow
def test_de_rastrigin_in_two_dimensions():
    obj = BoundedObjective(_rastrigin, [(-5.12, 5.12)] * 2)
    hits = sum(
        obj.value(differential_evolution(obj, np.random.default_rng(seed), budget=300)) > -1.0
        for seed in range(100)
    )
    assert hits >= 95


# --------------------------------------------------------------------------- #
# Reintento en sub-regiones
# --------------------------------------------------------------------------- #

def test_subregion_is_inside_with_bounded_sides(rng):
    bounds = np.array([[0.0, 4.0], [10.0, 20.0]])
    for _ in range(50):
        box = random_subregion(bounds, rng)
        side = box[:, 1] - box[:, 0]
        assert np.all(side >= 0.25 * (bounds[:, 1] - bounds[:, 0]) - 1e-12)
        assert np.all(side <= 0.5 * (bounds[:, 1] - bounds[:, 0]) + 1e-12)
        assert np.all(box[:, 0] >= bounds[:, 0]) and np.all(box[:, 1] <= bounds[:, 1] + 1e-12)


def test_retry_without_taken_points_is_plain_optimization():
    obj = BoundedObjective(_quadratic, [(0.0, 5.0)])
    plain = maximize(obj, OptimizerKind.DE, np.random.default_rng(5), budget=20)
    retried = subregion_retry(obj, np.empty((0, 1)), np.random.default_rng(5), budget=20)
    np.testing.assert_array_equal(plain, retried)


def test_retry_avoids_taken_optimum():
    obj = BoundedObjective(_constant, [(0.0, 1.0), (0.0, 1.0)])
    first = maximize(obj, OptimizerKind.LOCAL, np.random.default_rng(6))
    point = subregion_retry(obj, first.reshape(1, -1), np.random.default_rng(6), optimizer=OptimizerKind.LOCAL)
    assert not is_taken(point, first.reshape(1, -1))


def test_sequential_calls_return_distinct_points(rng):
    obj = BoundedObjective(_constant, [(0.0, 1.0), (0.0, 1.0)])
    taken = np.empty((0, 2))
    for _ in range(50):
        point = subregion_retry(obj, taken, rng, optimizer=OptimizerKind.LOCAL)
        assert not is_taken(point, taken)
        taken = np.vstack([taken, point])
    assert len(np.unique(taken, axis=0)) == 50


def test_exhausted_retries_fall_back_to_uniform_point(rng):
    obj = BoundedObjective(lambda X: X[:, 0], [(0.0, 1.0)])
    # el óptimo (1.0) siempre está tomado y el local desde el centro lo encuentra
    taken = np.array([[1.0]])
    point = subregion_retry(obj, taken, rng, optimizer=OptimizerKind.LOCAL, max_retries=0)
    assert not is_taken(point, taken)
    assert 0.0 <= point[0] <= 1.0
