"""
Bucle de aprendizaje activo.

Un ensayo arranca con 3 puntos uniformes etiquetados, evoluciona modelos y
agrega un punto por iteración según la estrategia (incertidumbre, diversidad,
Pareto o las líneas base aleatorias) hasta resolver el problema o llegar al
tope de puntos. Sólo el paso de selección cambia entre estrategias.
"""

import sys
from abc import ABC, abstractmethod
from typing import List, NamedTuple, Optional, Sequence, TextIO

import numpy as np
from scipy.spatial.distance import cdist

from app.config.settings import settings
from app.core.exceptions import LabelingAbortedError
from app.core.expression import Expression
from app.core.logging import get_logger
from app.models.al_models import (
    AcquisitionStrategy,
    EvolutionParams,
    IterationLog,
    ProblemSpec,
    StrategyKind,
    TrialResult,
)
from app.models.stack_model import DUPLICATE_TOLERANCE, StackModel, TrainingSet
from app.services import acquisition_service as acquisition
from app.services.gp_service import evolve, select_seeds
from app.services.optim_service import BoundedObjective, subregion_retry

logger = get_logger(__name__)

INITIAL_POINTS = 3
SOLVED_ONE_MINUS_R2 = 1e-8
SOLVED_RELATIVE_RESIDUAL = 1e-6
MAX_RESAMPLES = 10_000


# --------------------------------------------------------------------------- #
# Etiquetadores
# --------------------------------------------------------------------------- #

class Labeler(ABC):
    """Fuente de etiquetas para los puntos consultados."""

    @property
    def oracle(self) -> Optional[Expression]:
        return None

    @abstractmethod
    def label(self, point: np.ndarray, index: int) -> float:
        ...


class OracleLabeler(Labeler):
    """Etiqueta evaluando una expresión conocida (determinista)."""

    def __init__(self, expression: Expression):
        self.expression = expression

    @property
    def oracle(self) -> Expression:
        return self.expression

    def label(self, point: np.ndarray, index: int) -> float:
        return self.expression.evaluate(point)


class InteractiveLabeler(Labeler):
    """
    Protocolo por líneas: emite ``QUERY <idx> <x1> ... <xD>`` y espera
    ``LABEL <idx> <valor>``; ``ABORT`` o fin de entrada terminan el ensayo.
    """

    def __init__(self, input_stream: Optional[TextIO] = None, output_stream: Optional[TextIO] = None):
        self.input_stream = input_stream or sys.stdin
        self.output_stream = output_stream or sys.stdout

    def label(self, point: np.ndarray, index: int) -> float:
        coordinates = " ".join(repr(float(x)) for x in point)
        self.output_stream.write(f"QUERY {index} {coordinates}\n")
        self.output_stream.flush()

        for line in self.input_stream:
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0].upper() == "ABORT":
                raise LabelingAbortedError(index)
            if tokens[0].upper() == "LABEL" and len(tokens) == 3:
                try:
                    if int(tokens[1]) == index:
                        return float(tokens[2])
                except ValueError:
                    pass
            logger.warning("Respuesta de etiquetado inválida", line=line.strip(), expected_index=index)
        raise LabelingAbortedError(index)


# --------------------------------------------------------------------------- #
# Muestreo
# --------------------------------------------------------------------------- #

def sample_uniform(bounds, rng: np.random.Generator) -> np.ndarray:
    """Un sorteo uniforme independiente por dimensión."""
    bounds = np.asarray(bounds, dtype=float)
    return rng.uniform(bounds[:, 0], bounds[:, 1])


def sample_normal(bounds, rng: np.random.Generator) -> np.ndarray:
    """Normal con media en el centro y σ = (hi - lo)/6, recortada a la caja."""
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    return np.clip(rng.normal((lo + hi) / 2.0, (hi - lo) / 6.0), lo, hi)


def _unique_draw(sampler, data: TrainingSet, rng: np.random.Generator) -> np.ndarray:
    for _ in range(MAX_RESAMPLES):
        point = sampler(data.bounds, rng)
        if not data.contains(point):
            return point
    logger.warning("Muestreo sin punto único; se usa un sorteo uniforme")
    while True:
        point = sample_uniform(data.bounds, rng)
        if not data.contains(point):
            return point


# --------------------------------------------------------------------------- #
# Criterio de éxito
# --------------------------------------------------------------------------- #

class ValidationGrid(NamedTuple):
    inputs: np.ndarray
    labels: np.ndarray


def validation_grid(problem: ProblemSpec, rng: np.random.Generator, n: Optional[int] = None) -> ValidationGrid:
    """Grilla uniforme fija por ensayo, etiquetada con el oráculo."""
    bounds = np.asarray(problem.bounds, dtype=float)
    n = n or settings.validation_points
    inputs = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, problem.dims))
    labels = problem.oracle.evaluate_batch(inputs)
    finite = np.isfinite(labels)
    return ValidationGrid(inputs[finite], labels[finite])


def solved(best: StackModel, grid: ValidationGrid) -> bool:
    """
    True si el modelo alineado reproduce la grilla: ``1 - R² <= 1e-8`` y
    residuo máximo ``<= 1e-6`` por el rango de etiquetas.
    """
    if best is None or grid.labels.size == 0:
        return False
    predictions = best.predict(grid.inputs)
    if not np.all(np.isfinite(predictions)):
        return False
    residuals = np.abs(predictions - grid.labels)
    label_range = float(np.ptp(grid.labels))
    if label_range == 0.0:
        return bool(residuals.max() <= SOLVED_RELATIVE_RESIDUAL)
    total = float(np.sum((grid.labels - grid.labels.mean()) ** 2))
    one_minus_r2 = float(np.sum(residuals ** 2)) / total
    return one_minus_r2 <= SOLVED_ONE_MINUS_R2 and residuals.max() <= SOLVED_RELATIVE_RESIDUAL * label_range


# --------------------------------------------------------------------------- #
# Selección del siguiente punto
# --------------------------------------------------------------------------- #

class Selection(NamedTuple):
    point: np.ndarray
    uncertainty: Optional[float] = None
    diversity: Optional[float] = None
    ensemble_size: int = 0


def _available(cloud: np.ndarray, data: TrainingSet) -> np.ndarray:
    """Máscara de candidatos que no coinciden con filas ya tomadas."""
    if len(data) == 0:
        return np.ones(cloud.shape[0], dtype=bool)
    return cdist(cloud, data.inputs, metric="chebyshev").min(axis=1) > DUPLICATE_TOLERANCE


def uncertainty_objective(strategy: AcquisitionStrategy, ensemble: Sequence[StackModel], bounds) -> BoundedObjective:
    def f(X: np.ndarray) -> np.ndarray:
        responses = acquisition.ensemble_responses(ensemble, X)
        return acquisition.uncertainty_scores(strategy.uncertainty_metric, responses, strategy.trim_fraction)

    return BoundedObjective(f, bounds)


def select_next(
    strategy: AcquisitionStrategy,
    population: Sequence[StackModel],
    data: TrainingSet,
    rng: np.random.Generator,
) -> Selection:
    """Elige el siguiente punto a etiquetar; nunca repite un punto de ``data``."""
    kind = strategy.kind

    if kind == StrategyKind.UNIFORM:
        return Selection(_unique_draw(sample_uniform, data, rng))

    if kind == StrategyKind.NORMAL:
        return Selection(_unique_draw(sample_normal, data, rng))

    if kind == StrategyKind.UNCERTAINTY:
        ensemble = acquisition.ensemble_select(population, data, rng)
        objective = uncertainty_objective(strategy, ensemble, data.bounds)
        point = subregion_retry(objective, data, rng, optimizer=strategy.optimizer)
        return Selection(point, uncertainty=objective.value(point), ensemble_size=len(ensemble))

    cloud = acquisition.candidate_cloud(data.bounds, strategy.n_candidates, rng)
    available = _available(cloud, data)
    if not available.any():
        return Selection(_unique_draw(sample_uniform, data, rng))
    cloud = cloud[available]
    diversity = acquisition.diversity_scores(strategy.diversity_metric, data, cloud)

    if kind == StrategyKind.DIVERSITY:
        best = int(np.argmax(diversity))
        return Selection(cloud[best], diversity=float(diversity[best]))

    ensemble = acquisition.ensemble_select(population, data, rng)
    responses = acquisition.ensemble_responses(ensemble, cloud)
    uncertainty = acquisition.uncertainty_scores(strategy.uncertainty_metric, responses, strategy.trim_fraction)
    front = acquisition.pareto_front_indices(uncertainty, diversity)
    chosen = int(acquisition.pick_median(front))
    return Selection(
        cloud[chosen],
        uncertainty=float(uncertainty[chosen]),
        diversity=float(diversity[chosen]),
        ensemble_size=len(ensemble),
    )


# --------------------------------------------------------------------------- #
# Ensayo
# --------------------------------------------------------------------------- #

def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not np.isfinite(value):
        return None
    return float(value)


def initial_points(data: TrainingSet, rng: np.random.Generator, count: int = INITIAL_POINTS) -> List[np.ndarray]:
    """Puntos uniformes únicos para arrancar un ensayo o una sesión."""
    points: List[np.ndarray] = []
    for _ in range(count):
        point = _unique_draw(sample_uniform, data, rng)
        while any(np.all(np.abs(point - p) <= DUPLICATE_TOLERANCE) for p in points):
            point = sample_uniform(data.bounds, rng)
        points.append(point)
    return points


def run_al(
    problem: ProblemSpec,
    strategy: AcquisitionStrategy,
    params: EvolutionParams,
    labeler: Labeler,
    rng: np.random.Generator,
    seed_models: Optional[Sequence[StackModel]] = None,
    trial: int = 0,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> TrialResult:
    """
    Ejecuta un ensayo completo de aprendizaje activo.

    Con un etiquetador oráculo el ensayo termina al resolver el problema sobre
    una grilla de validación fija; con uno interactivo sólo termina por tope
    de puntos o por ``ABORT`` (el log parcial se conserva).
    """
    data = TrainingSet(problem.bounds)
    grid = validation_grid(problem, rng) if labeler.oracle is not None else None
    iterations: List[IterationLog] = []
    population: List[StackModel] = []
    is_solved = False
    aborted = False

    try:
        for point in initial_points(data, rng):
            data.append(point, labeler.label(point, len(data)))

        population = evolve(data, list(seed_models or []), params, rng, n_jobs=n_jobs)
        best = population[0]
        is_solved = grid is not None and solved(best, grid)
        for index in range(len(data)):
            iterations.append(
                IterationLog(
                    iteration=0,
                    point=data.inputs[index].tolist(),
                    label=float(data.labels[index]),
                    best_fitness=best.fitness_error,
                    best_model=best.to_infix(problem.variables),
                )
            )

        iteration = 0
        while not is_solved and len(data) < problem.max_points:
            iteration += 1
            selection = select_next(strategy, population, data, rng)
            label = labeler.label(selection.point, len(data))
            point = data.append(selection.point, label)

            population = evolve(data, select_seeds(population, params.seed_fraction), params, rng, n_jobs=n_jobs)
            best = population[0]
            is_solved = grid is not None and solved(best, grid)
            iterations.append(
                IterationLog(
                    iteration=iteration,
                    point=point.tolist(),
                    label=float(label),
                    uncertainty=_finite_or_none(selection.uncertainty),
                    diversity=_finite_or_none(selection.diversity),
                    best_fitness=best.fitness_error,
                    ensemble_size=selection.ensemble_size,
                    best_model=best.to_infix(problem.variables),
                )
            )
            logger.debug(
                "Punto agregado",
                problem=problem.id,
                strategy=strategy.spec,
                points=len(data),
                best_fitness=best.fitness_error,
            )

    except LabelingAbortedError:
        aborted = True
        logger.warning("Ensayo abortado por el etiquetador", problem=problem.id, points=len(data))

    best = population[0] if population else None
    result = TrialResult(
        problem_id=problem.id,
        strategy=strategy.spec,
        trial=trial,
        seed=seed,
        points_used=len(data),
        solved=is_solved,
        aborted=aborted,
        best_fitness=best.fitness_error if best is not None else None,
        best_model=best.to_infix(problem.variables) if best is not None else None,
        iterations=iterations,
    )
    logger.info(
        "Ensayo completado",
        problem=problem.id,
        strategy=strategy.spec,
        trial=trial,
        points_used=result.points_used,
        solved=result.solved,
        aborted=aborted,
    )
    return result
