"""Tests de los estadísticos de comparación."""

import math

import numpy as np
import pytest
from scipy import stats

from app.core.exceptions import UndefinedStatisticError
from app.core.statistics import censored_median, mann_whitney, pearson_r2, spearman_rho


# --------------------------------------------------------------------------- #
# Mediana con censura
# --------------------------------------------------------------------------- #

def test_censored_median_clips_to_cap():
    assert censored_median([3, 5, 2000], 1000) == 5.0


def test_censored_median_all_censored():
    assert censored_median([1000] * 5, 1000) == 1000.0


def test_censored_median_empty_is_nan():
    assert math.isnan(censored_median([], 10))


# --------------------------------------------------------------------------- #
# Mann-Whitney
# --------------------------------------------------------------------------- #

def test_mann_whitney_identical_samples():
    u, p = mann_whitney([5, 5, 5], [5, 5, 5])
    assert p == 1.0
    assert u == 4.5


def test_mann_whitney_exact_small_samples():
    u, p = mann_whitney([1, 2, 3], [4, 5, 6])
    assert u == 0.0
    assert p == pytest.approx(0.1)


def test_mann_whitney_exact_agrees_with_normal_approximation():
    rng = np.random.default_rng(8)
    a = rng.normal(0.0, 1.0, 8)
    b = rng.normal(0.7, 1.0, 8)
    _, exact = mann_whitney(a, b)
    approx = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic").pvalue
    assert abs(exact - approx) < 0.02


def test_mann_whitney_separated_samples_are_significant():
    _, p = mann_whitney(list(range(3, 28)), list(range(40, 65)))
    assert p < 0.05


def test_mann_whitney_rejects_empty():
    with pytest.raises(ValueError):
        mann_whitney([], [1, 2])


# --------------------------------------------------------------------------- #
# Pearson y Spearman
# --------------------------------------------------------------------------- #

def test_linear_relation():
    x = [1.0, 2.0, 3.0, 4.0]
    assert pearson_r2(x, [2 * v for v in x]) == pytest.approx(1.0)
    assert spearman_rho(x, [2 * v for v in x]) == pytest.approx(1.0)


def test_negative_relation():
    x = [1.0, 2.0, 3.0, 4.0]
    assert pearson_r2(x, [-v for v in x]) == pytest.approx(1.0)
    assert spearman_rho(x, [-v for v in x]) == pytest.approx(-1.0)


def test_spearman_by_hand():
    assert spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_pearson_zero_variance_is_undefined():
    with pytest.raises(UndefinedStatisticError):
        pearson_r2([1, 1, 1], [1, 2, 3])


def test_pearson_length_mismatch():
    with pytest.raises(ValueError):
        pearson_r2([1, 2, 3], [1, 2])
