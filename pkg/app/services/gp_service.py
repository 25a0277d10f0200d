"""
Motor StackGP: fitness por correlación, alineación lineal, operadores de
variación y el bucle generacional por islas.

Las degeneraciones numéricas nunca levantan excepción: cualquier salida no
finita o sin varianza se traduce en el peor fitness (1.0).
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from app.config.settings import settings
from app.core.exceptions import AlignmentError
from app.core.logging import get_logger
from app.models.al_models import EvolutionParams
from app.models.stack_model import (
    OperatorDef,
    StackModel,
    TrainingSet,
    Var,
    build_registry,
    consumption_ranges,
    required_terminals,
)

logger = get_logger(__name__)

WORST_FITNESS = 1.0

# Errores por debajo de este valor se consideran empate al ordenar
FITNESS_TIE = 1e-12

MUTATION_FORMS = 7


# --------------------------------------------------------------------------- #
# Evaluación, fitness y alineación
# --------------------------------------------------------------------------- #

def evaluate(model: StackModel, row) -> float:
    """Salida cruda del modelo en un único vector D."""
    return float(model.output(np.asarray(row, dtype=float).reshape(1, -1))[0])


def evaluate_batch(model: StackModel, X) -> np.ndarray:
    """Salida cruda del modelo en todas las filas de ``X``."""
    return model.output(X)


def fitness(model: StackModel, data: TrainingSet) -> float:
    """
    Calcula ``1 - R²`` entre la salida del modelo y las etiquetas.

    Devuelve 1.0 si hay salidas no finitas, o si la salida o las etiquetas no
    tienen varianza. El resultado queda en caché en ``model.fitness_error``.
    """
    error = WORST_FITNESS
    if len(data) >= 2:
        y_hat = model.output(data.inputs)
        y = data.labels
        if np.all(np.isfinite(y_hat)) and np.ptp(y_hat) > 0 and np.ptp(y) > 0:
            with np.errstate(all="ignore"):
                r = np.corrcoef(y_hat, y)[0, 1]
            if np.isfinite(r):
                error = float(np.clip(1.0 - r * r, 0.0, 1.0))
    model.fitness_error = error
    return error


def align(model: StackModel, data: TrainingSet) -> Tuple[float, float]:
    """
    Ajusta por mínimos cuadrados ``a1*ŷ + a0`` contra las etiquetas.

    Returns:
        (a0, a1) guardados en ``model.align``

    Raises:
        AlignmentError: Si la salida no es finita o no tiene varianza
    """
    y_hat = model.output(data.inputs)
    y = data.labels
    if len(data) == 0 or not np.all(np.isfinite(y_hat)):
        model.align = None
        model.fitness_error = WORST_FITNESS
        raise AlignmentError("Salida del modelo no finita")

    with np.errstate(all="ignore"):
        centered = y_hat - y_hat.mean()
        variance = float(np.mean(centered * centered))
        if not np.isfinite(variance) or variance == 0.0:
            model.align = None
            model.fitness_error = WORST_FITNESS
            raise AlignmentError()
        a1 = float(np.mean(centered * (y - y.mean())) / variance)
        a0 = float(y.mean() - a1 * y_hat.mean())

    model.align = (a0, a1)
    return model.align


def try_align(model: StackModel, data: TrainingSet) -> bool:
    try:
        align(model, data)
        return True
    except AlignmentError:
        return False


def rank_key(model: StackModel) -> Tuple[float, int]:
    """Orden (fitness, complejidad) con empate bajo ``FITNESS_TIE``."""
    error = WORST_FITNESS if model.fitness_error is None else model.fitness_error
    return (0.0 if error < FITNESS_TIE else error, model.complexity)


def best_model(models: Sequence[StackModel]) -> Optional[StackModel]:
    if not models:
        return None
    return min(models, key=rank_key)


# --------------------------------------------------------------------------- #
# Selección
# --------------------------------------------------------------------------- #

def dominates(a: StackModel, b: StackModel) -> bool:
    """``a`` domina a ``b`` minimizando (fitness_error, complexity)."""
    fa, fb = a.fitness_error, b.fitness_error
    return fa <= fb and a.complexity <= b.complexity and (fa < fb or a.complexity < b.complexity)


def tournament_select(population: Sequence[StackModel], k: int, rng: np.random.Generator) -> StackModel:
    """
    Torneo de Pareto: muestrea ``k`` modelos y devuelve uno al azar del frente
    no dominado en (fitness_error, complexity).
    """
    if not population:
        raise ValueError("tournament_select requiere una población no vacía")
    replace = len(population) < k
    picks = rng.choice(len(population), size=k, replace=replace)
    candidates = [population[i] for i in picks]
    front = [c for c in candidates if not any(dominates(o, c) for o in candidates)]
    return front[int(rng.integers(len(front)))]


# --------------------------------------------------------------------------- #
# Operadores de variación
# --------------------------------------------------------------------------- #

class StackGP:
    """
    Variación de modelos para un problema de dimensión ``dims``.

    Agrupa el registro de operadores y los parámetros de inicialización que
    necesitan repair, spawn, crossover y mutate.
    """

    def __init__(self, dims: int, params: Optional[EvolutionParams] = None):
        if dims < 1:
            raise ValueError("dims debe ser >= 1")
        self.dims = dims
        self.params = params or EvolutionParams()
        self.registry: Tuple[OperatorDef, ...] = build_registry(self.params.operators)
        self._by_arity: Dict[int, List[OperatorDef]] = {}
        for op in self.registry:
            self._by_arity.setdefault(op.arity, []).append(op)

    # -- bloques aleatorios ------------------------------------------------

    def random_terminal(self, rng: np.random.Generator):
        if rng.random() < self.params.constant_probability:
            r = self.params.constant_range
            return float(rng.uniform(-r, r))
        return Var(int(rng.integers(self.dims)))

    def random_operator(self, rng: np.random.Generator) -> OperatorDef:
        return self.registry[int(rng.integers(len(self.registry)))]

    def spawn(self, rng: np.random.Generator) -> StackModel:
        """Modelo aleatorio nuevo, ya reparado."""
        n_ops = int(rng.integers(0, self.params.max_initial_ops + 1))
        model = StackModel([self.random_operator(rng) for _ in range(n_ops)], [])
        return self.repair(model, rng)

    # -- reparación --------------------------------------------------------

    def repair(self, model: StackModel, rng: np.random.Generator) -> StackModel:
        """
        Empuja terminales aleatorios al tope de la pila de datos hasta cubrir
        la demanda de los operadores. Nunca quita operadores.
        """
        shortage = required_terminals(model.op_stack) - len(model.data_stack)
        if shortage > 0:
            fresh = [self.random_terminal(rng) for _ in range(shortage)]
            model.data_stack = fresh + list(model.data_stack)
            model.clear_cache()
        return model

    @staticmethod
    def _trim_unused(model: StackModel) -> StackModel:
        keep = required_terminals(model.op_stack)
        if len(model.data_stack) > keep:
            model.data_stack = model.data_stack[:keep]
        return model

    def _finish(self, model: StackModel, rng: np.random.Generator) -> StackModel:
        model.clear_cache()
        return self._trim_unused(self.repair(model, rng))

    # -- cruce -------------------------------------------------------------

    @staticmethod
    def _cut(model: StackModel, rng: np.random.Generator) -> Tuple[int, int, int, int]:
        """Puntos de corte en operadores y el rango de datos que consumen."""
        n = len(model.op_stack)
        if n < 2:
            c1 = c2 = int(rng.integers(0, n + 1))
        else:
            c1, c2 = sorted(int(c) for c in rng.choice(n + 1, size=2, replace=False))
        ranges = consumption_ranges(model.op_stack)

        def data_position(cut: int) -> int:
            if cut < n:
                return ranges[cut][0]
            return ranges[-1][1] if n else 0

        return c1, c2, data_position(c1), data_position(c2)

    def crossover(
        self,
        parent_a: StackModel,
        parent_b: StackModel,
        rng: np.random.Generator,
    ) -> Tuple[StackModel, StackModel]:
        """
        Cruce de 2 puntos: intercambia un segmento de operadores de cada padre
        junto con los terminales que ese segmento consume.
        """
        if parent_a.structural_key() == parent_b.structural_key():
            return parent_a.copy(), parent_b.copy()

        a1, a2, sa, ea = self._cut(parent_a, rng)
        b1, b2, sb, eb = self._cut(parent_b, rng)
        ops_a, data_a = parent_a.op_stack, parent_a.data_stack
        ops_b, data_b = parent_b.op_stack, parent_b.data_stack

        child_a = StackModel(
            ops_a[:a1] + ops_b[b1:b2] + ops_a[a2:],
            data_a[:sa] + data_b[sb:eb] + data_a[ea:],
        )
        child_b = StackModel(
            ops_b[:b1] + ops_a[a1:a2] + ops_b[b2:],
            data_b[:sb] + data_a[sa:ea] + data_b[eb:],
        )
        return self._finish(child_a, rng), self._finish(child_b, rng)

    # -- mutación ----------------------------------------------------------

    def _applicable(self, form: int, model: StackModel) -> bool:
        if form == 1:
            return model.uses_variables()
        if form in (2, 4):
            return bool(model.op_stack)
        return True

    def mutation_form(self, model: StackModel, rng: np.random.Generator) -> int:
        """Forma de mutación 1..7 equiprobable; se re-sortea si no aplica."""
        while True:
            form = int(rng.integers(1, MUTATION_FORMS + 1))
            if self._applicable(form, model):
                return form

    def _insert_operator(self, model: StackModel, position: int, op: OperatorDef, rng: np.random.Generator) -> None:
        n = len(model.op_stack)
        ranges = consumption_ranges(model.op_stack)
        if position < n:
            data_position = ranges[position][0]
        elif n:
            data_position = ranges[-1][1]
        else:
            data_position = min(1, len(model.data_stack))
        fresh = [self.random_terminal(rng) for _ in range(op.arity - 1)]
        model.op_stack = model.op_stack[:position] + [op] + model.op_stack[position:]
        model.data_stack = model.data_stack[:data_position] + fresh + model.data_stack[data_position:]

    def mutate(self, model: StackModel, rng: np.random.Generator, form: Optional[int] = None) -> StackModel:
        """
        Aplica una de las 7 formas de mutación y devuelve un modelo nuevo reparado.

        Formas: (1) reemplazar una variable, (2) reemplazar un operador,
        (3) apilar un operador en el tope, (4) desapilar operadores,
        (5) insertar un operador, (6) cruce con un modelo aleatorio,
        (7) agregar un operador al fondo.
        """
        if form is None:
            form = self.mutation_form(model, rng)
        child = model.copy()
        child.clear_cache()
        n = len(child.op_stack)

        if form == 1:
            slots = [i for i, t in enumerate(child.data_stack) if isinstance(t, Var)]
            slot = slots[int(rng.integers(len(slots)))]
            child.data_stack[slot] = Var(int(rng.integers(self.dims)))

        elif form == 2:
            i = int(rng.integers(n))
            old = child.op_stack[i]
            same_arity = [op for op in self._by_arity.get(old.arity, []) if op.symbol != old.symbol]
            if same_arity:
                child.op_stack[i] = same_arity[int(rng.integers(len(same_arity)))]
            else:
                others = [op for op in self.registry if op.symbol != old.symbol]
                if others:
                    child.op_stack[i] = others[int(rng.integers(len(others)))]

        elif form == 3:
            self._insert_operator(child, 0, self.random_operator(rng), rng)

        elif form == 4:
            k = int(rng.integers(1, n + 1))
            if k == n:
                child.op_stack = []
                child.data_stack = child.data_stack[:1]
            else:
                consumed = consumption_ranges(child.op_stack)[k - 1][1]
                child.op_stack = child.op_stack[k:]
                child.data_stack = child.data_stack[consumed:]

        elif form == 5:
            self._insert_operator(child, int(rng.integers(0, n + 1)), self.random_operator(rng), rng)

        elif form == 6:
            child = self.crossover(child, self.spawn(rng), rng)[0]

        elif form == 7:
            self._insert_operator(child, n, self.random_operator(rng), rng)

        else:
            raise ValueError(f"Forma de mutación inválida: {form}")

        return self._finish(child, rng)


# --------------------------------------------------------------------------- #
# Evolución por islas
# --------------------------------------------------------------------------- #

def _score(population: Sequence[StackModel], data: TrainingSet) -> None:
    for model in population:
        if model.fitness_error is None:
            fitness(model, data)


def _add_unique(model: StackModel, pool: List[StackModel], seen: set) -> bool:
    key = model.structural_key()
    if key in seen:
        return False
    seen.add(key)
    pool.append(model)
    return True


def _refill(engine: StackGP, pool: List[StackModel], seen: set, size: int, rng: np.random.Generator) -> None:
    """Completa con spawns únicos; se rinde si el espacio de modelos se agota."""
    attempts = 0
    while len(pool) < size and attempts < 20 * size:
        _add_unique(engine.spawn(rng), pool, seen)
        attempts += 1


def _run_island(
    engine: StackGP,
    data: TrainingSet,
    seeds: List[StackModel],
    rng: np.random.Generator,
) -> List[StackModel]:
    params = engine.params
    size = params.population_size

    population: List[StackModel] = []
    seen: set = set()
    for seed in seeds[:size]:
        model = seed.copy()
        model.clear_cache()
        _add_unique(model, population, seen)
    _refill(engine, population, seen, size, rng)

    n_elite = int(round(size * params.elitism_rate / 100.0))
    if params.elitism_rate > 0:
        n_elite = max(1, n_elite)
    n_survivors = int(round(size * params.selection_rate / 100.0))
    n_rest = max(0, size - n_elite - n_survivors)
    n_crossover = int(round(n_rest * params.crossover_rate / 100.0))
    n_spawn = int(round(n_rest * params.spawn_rate / 100.0))
    n_mutation = max(0, n_rest - n_crossover - n_spawn)
    k = params.tournament_size

    for _ in range(params.generations_per_iteration):
        _score(population, data)
        ranked = sorted(population, key=rank_key)

        offspring: List[StackModel] = [m.copy() for m in ranked[:n_elite]]
        offspring += [tournament_select(population, k, rng).copy() for _ in range(n_survivors)]
        for _ in range(n_mutation):
            offspring.append(engine.mutate(tournament_select(population, k, rng), rng))
        crossed: List[StackModel] = []
        while len(crossed) < n_crossover:
            pa = tournament_select(population, k, rng)
            pb = tournament_select(population, k, rng)
            crossed.extend(engine.crossover(pa, pb, rng))
        offspring += crossed[:n_crossover]
        offspring += [engine.spawn(rng) for _ in range(n_spawn)]

        population = []
        seen = set()
        for model in offspring:
            _add_unique(model, population, seen)
        _refill(engine, population, seen, size, rng)

    _score(population, data)
    return population


def evolve(
    data: TrainingSet,
    seed_models: Sequence[StackModel],
    params: Optional[EvolutionParams] = None,
    rng: Optional[np.random.Generator] = None,
    n_jobs: Optional[int] = None,
) -> List[StackModel]:
    """
    Ejecuta ``parallel_runs`` islas independientes y fusiona sus poblaciones.

    Las semillas se reparten entre islas en round-robin. Cada isla recibe su
    propio flujo aleatorio derivado de ``rng``, por lo que el resultado no
    depende de ``n_jobs``.

    Returns:
        Modelos únicos, alineados y ordenados por (fitness, complejidad)
    """
    params = params or EvolutionParams()
    rng = rng if rng is not None else np.random.default_rng()
    if len(data) < 2:
        raise ValueError("evolve requiere al menos 2 puntos etiquetados")

    engine = StackGP(data.dims, params)
    islands = params.parallel_runs
    island_rngs = rng.spawn(islands)
    seeds = [list(seed_models[i::islands]) for i in range(islands)]

    logger.debug(
        "Evolución iniciada",
        points=len(data),
        islands=islands,
        population_size=params.population_size,
        generations=params.generations_per_iteration,
        seeds=len(seed_models),
    )

    results = Parallel(n_jobs=n_jobs or settings.n_jobs)(
        delayed(_run_island)(engine, data, seeds[i], island_rngs[i]) for i in range(islands)
    )

    merged: List[StackModel] = []
    seen: set = set()
    for model in sorted((m for island in results for m in island), key=rank_key):
        if _add_unique(model, merged, seen):
            if not try_align(model, data):
                model.fitness_error = WORST_FITNESS
    merged.sort(key=rank_key)

    best = merged[0]
    logger.debug(
        "Evolución completada",
        population=len(merged),
        best_fitness=best.fitness_error,
        best_complexity=best.complexity,
    )
    return merged


def select_seeds(models: Sequence[StackModel], fraction: float) -> List[StackModel]:
    """Mejores ``fraction`` modelos (al menos uno) para sembrar la siguiente evolución."""
    if not models:
        return []
    count = max(1, int(round(len(models) * fraction)))
    return [m.copy() for m in sorted(models, key=rank_key)[:count]]
