"""
Configuración de pytest y fixtures para la suite.

La suite corre **sin etiquetado humano ni red**:
- Generadores aleatorios con semilla fija: cada test es reproducible.
- Parámetros de evolución reducidos (población 60, 20 generaciones, 2 islas)
  para que los ensayos completos tarden segundos.
- Los oráculos estadísticos de muchas corridas llevan ``@pytest.mark.slow``
  y quedan fuera de la corrida por defecto (ver ``pytest.ini``).
"""

from typing import Sequence, Union

import numpy as np
import pytest

from app.models.al_models import EvolutionParams, ProblemSpec
from app.models.stack_model import OPERATORS_BY_SYMBOL, StackModel, TrainingSet, Var


def build_model(ops: Sequence[str], data: Sequence[Union[str, float]]) -> StackModel:
    """``build_model(["+", "*"], ["x0", "x1", 2.0])`` -> StackModel."""
    terminals = []
    for item in data:
        if isinstance(item, str):
            terminals.append(Var(int(item.lstrip("x"))))
        else:
            terminals.append(float(item))
    return StackModel([OPERATORS_BY_SYMBOL[s] for s in ops], terminals)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def model_factory():
    return build_model


@pytest.fixture
def small_params() -> EvolutionParams:
    return EvolutionParams(population_size=60, generations_per_iteration=20, parallel_runs=2)


@pytest.fixture
def line_data() -> TrainingSet:
    """y = 2x + 1 en 10 puntos de [0, 10]."""
    x = np.linspace(0.5, 9.5, 10).reshape(-1, 1)
    return TrainingSet([(0.0, 10.0)], x, 2.0 * x[:, 0] + 1.0)


@pytest.fixture
def product_problem() -> ProblemSpec:
    return ProblemSpec(id="product2", expression="x*y", variables=["x", "y"], bounds=[(1, 5), (1, 5)], max_points=30)


@pytest.fixture
def identity_problem() -> ProblemSpec:
    return ProblemSpec(id="identity", expression="x", variables=["x"], bounds=[(1, 5)], max_points=20)


@pytest.fixture
def problems_file(tmp_path):
    """Archivo de problemas mínimo para bench y CLI."""
    path = tmp_path / "problems.txt"
    path.write_text(
        "# problemas de prueba\n"
        "identity | x | x=1..5 | 20\n"
        "product2 | x*y | x, y | 30   # cotas por defecto\n",
        encoding="utf-8",
    )
    return path
