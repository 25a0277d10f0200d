"""
Optimizadores continuos para maximizar una función acotada.

- ``local_minimize``: Nelder-Mead con cotas (scipy) desde un punto de partida.
- ``differential_evolution``: rand/1/bin sobre numpy con F por mutante, reflexión
  en las cotas y corte por estancamiento.
- ``subregion_retry``: re-optimiza en sub-cajas aleatorias hasta obtener un
  punto que no esté ya tomado.
"""

from typing import Callable, Optional

import numpy as np
from scipy import optimize

from app.core.logging import get_logger
from app.models.al_models import OptimizerKind
from app.models.stack_model import DUPLICATE_TOLERANCE, TrainingSet, validate_bounds

logger = get_logger(__name__)

# Valor finito que reemplaza a -f cuando f no es finita
PENALTY = 1e30

LOCAL_BUDGET = 200
DE_GENERATIONS = 100
DE_STAGNATION_GENERATIONS = 30
DE_STAGNATION_TOLERANCE = 1e-12
DE_MIN_POPULATION = 20
DE_POPULATION_PER_DIM = 15
DE_F_MIN = 0.5
DE_F_MAX = 1.0
DE_CROSSOVER_RATE = 0.7
SIMPLEX_STEP = 0.05
START_JITTER = 0.01
MAX_RETRIES = 100
SUBREGION_MIN_FRACTION = 0.25
SUBREGION_MAX_FRACTION = 0.5


class BoundedObjective:
    """
    Función a maximizar sobre una caja.

    ``f`` es vectorizada: recibe (n, D) y devuelve (n,). Los valores no
    finitos se leen como ``-inf``.
    """

    def __init__(self, f: Callable[[np.ndarray], np.ndarray], bounds):
        self.f = f
        self.bounds = validate_bounds(bounds)

    @property
    def dims(self) -> int:
        return self.bounds.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        values = np.asarray(self.f(X), dtype=float).reshape(-1)
        return np.where(np.isfinite(values) | (values == np.inf), values, -np.inf)

    def value(self, x) -> float:
        return float(self(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def restricted(self, bounds) -> "BoundedObjective":
        return BoundedObjective(self.f, bounds)

    def _loss(self, X) -> np.ndarray:
        loss = -self(X)
        return np.where(np.isfinite(loss), loss, PENALTY)


def is_taken(point, taken, tol: float = DUPLICATE_TOLERANCE) -> bool:
    """True si ``point`` coincide (por coordenada) con alguna fila de ``taken``."""
    if taken is None:
        return False
    if isinstance(taken, TrainingSet):
        return taken.contains(point, tol)
    rows = np.asarray(taken, dtype=float)
    if rows.size == 0:
        return False
    rows = rows.reshape(-1, np.asarray(point).size)
    return bool(np.any(np.all(np.abs(rows - np.asarray(point, dtype=float)) <= tol, axis=1)))


# --------------------------------------------------------------------------- #
# Local
# --------------------------------------------------------------------------- #

def _initial_simplex(obj: BoundedObjective, start: np.ndarray) -> np.ndarray:
    """Simplex de lado 5% de cada dimensión, orientado hacia el interior."""
    steps = SIMPLEX_STEP * (obj.upper - obj.lower)
    simplex = np.tile(start, (obj.dims + 1, 1))
    for i in range(obj.dims):
        direction = 1.0 if start[i] + steps[i] <= obj.upper[i] else -1.0
        simplex[i + 1, i] = start[i] + direction * steps[i]
    return simplex


def local_minimize(obj: BoundedObjective, start, budget: int = LOCAL_BUDGET) -> np.ndarray:
    """
    Maximiza ``obj`` con Nelder-Mead (minimizando ``-f``) desde ``start``.

    Devuelve el mejor punto encontrado, siempre dentro de la caja; si no mejora
    estrictamente a ``start``, devuelve ``start``.
    """
    start = obj.clip(np.asarray(start, dtype=float).reshape(-1))
    start_value = obj.value(start)

    result = optimize.minimize(
        lambda x: float(obj._loss(x.reshape(1, -1))[0]),
        start,
        method="Nelder-Mead",
        bounds=optimize.Bounds(obj.lower, obj.upper),
        options={
            "maxfev": budget,
            "initial_simplex": _initial_simplex(obj, start),
            "xatol": 1e-10,
            "fatol": 1e-14,
        },
    )
    best = obj.clip(result.x)
    if obj.value(best) > start_value:
        return best
    return start


def local_start(obj: BoundedObjective, rng: np.random.Generator) -> np.ndarray:
    """Centro de la caja más un jitter pequeño."""
    center = obj.bounds.mean(axis=1)
    jitter = rng.uniform(-START_JITTER, START_JITTER, size=obj.dims) * (obj.upper - obj.lower)
    return obj.clip(center + jitter)


# --------------------------------------------------------------------------- #
# Evolución diferencial
# --------------------------------------------------------------------------- #

def _reflect(X: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Refleja cada coordenada en las cotas hasta caer dentro de la caja."""
    width = upper - lower
    folded = np.mod(X - lower, 2.0 * width)
    folded = np.where(folded > width, 2.0 * width - folded, folded)
    return lower + folded


def _parent_ids(size: int, rng: np.random.Generator) -> np.ndarray:
    """Tres padres distintos entre sí y del objetivo, por fila."""
    ids = np.empty((size, 3), dtype=int)
    for target in range(size):
        picks = rng.choice(size - 1, 3, replace=False)
        ids[target] = picks + (picks >= target)
    return ids


def differential_evolution(
    obj: BoundedObjective,
    rng: np.random.Generator,
    budget: int = DE_GENERATIONS,
    stagnation: int = DE_STAGNATION_GENERATIONS,
) -> np.ndarray:
    """
    Maximiza ``obj`` con rand/1/bin: población max(15·D, 20), F ~ U(0.5, 1)
    por mutante, CR = 0.7 y reflexión en las cotas.

    Termina tras ``budget`` generaciones o cuando el mejor valor no mejora más
    de 1e-12 durante ``stagnation`` generaciones seguidas.
    """
    size = max(DE_POPULATION_PER_DIM * obj.dims, DE_MIN_POPULATION)
    lower, upper = obj.lower, obj.upper
    population = rng.uniform(lower, upper, size=(size, obj.dims))
    loss = obj._loss(population)
    best = float(loss.min())
    stalled = 0

    for generation in range(budget):
        parents = _parent_ids(size, rng)
        scale = rng.uniform(DE_F_MIN, DE_F_MAX, size=(size, 1))
        mutants = population[parents[:, 0]] + scale * (population[parents[:, 1]] - population[parents[:, 2]])
        mutants = _reflect(mutants, lower, upper)

        cross = rng.random((size, obj.dims)) <= DE_CROSSOVER_RATE
        cross[np.arange(size), rng.integers(obj.dims, size=size)] = True
        trials = np.where(cross, mutants, population)
        trial_loss = obj._loss(trials)

        improved = trial_loss <= loss
        population[improved] = trials[improved]
        loss[improved] = trial_loss[improved]

        current = float(loss.min())
        if current < best - DE_STAGNATION_TOLERANCE:
            best = current
            stalled = 0
        else:
            stalled += 1
            if stalled >= stagnation:
                logger.debug("Evolución diferencial estancada", generation=generation + 1, loss=best)
                break

    return obj.clip(population[int(np.argmin(loss))])


def maximize(
    obj: BoundedObjective,
    optimizer: OptimizerKind,
    rng: np.random.Generator,
    budget: Optional[int] = None,
) -> np.ndarray:
    """Despacha al optimizador configurado."""
    optimizer = OptimizerKind(optimizer)
    if optimizer == OptimizerKind.LOCAL:
        return local_minimize(obj, local_start(obj, rng), budget or LOCAL_BUDGET)
    return differential_evolution(obj, rng, budget or DE_GENERATIONS)


# --------------------------------------------------------------------------- #
# Reintento en sub-regiones
# --------------------------------------------------------------------------- #

def random_subregion(bounds, rng: np.random.Generator) -> np.ndarray:
    """Sub-caja con cada lado entre 25% y 50% del lado original."""
    bounds = np.asarray(bounds, dtype=float)
    side = bounds[:, 1] - bounds[:, 0]
    width = rng.uniform(SUBREGION_MIN_FRACTION, SUBREGION_MAX_FRACTION, size=side.shape) * side
    lo = bounds[:, 0] + rng.uniform(0.0, 1.0, size=side.shape) * (side - width)
    return np.column_stack([lo, lo + width])


def subregion_retry(
    obj: BoundedObjective,
    taken,
    rng: np.random.Generator,
    optimizer: OptimizerKind = OptimizerKind.DE,
    budget: Optional[int] = None,
    max_retries: int = MAX_RETRIES,
) -> np.ndarray:
    """
    Optimiza en la caja completa y, mientras el resultado ya esté tomado,
    re-optimiza en sub-cajas aleatorias. Agotados los reintentos cae a un punto
    uniforme único.
    """
    point = maximize(obj, optimizer, rng, budget)
    if not is_taken(point, taken):
        return point

    for attempt in range(1, max_retries + 1):
        point = maximize(obj.restricted(random_subregion(obj.bounds, rng)), optimizer, rng, budget)
        if not is_taken(point, taken):
            logger.debug("Punto único hallado en sub-región", retries=attempt)
            return point

    logger.warning("Reintentos en sub-región agotados; se usa un punto uniforme", retries=max_retries)
    while True:
        point = rng.uniform(obj.lower, obj.upper)
        if not is_taken(point, taken):
            return point
