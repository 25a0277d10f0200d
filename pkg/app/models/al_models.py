"""
Modelos de datos del aprendizaje activo y de las campañas de benchmark.
Define configuración validada (pydantic) y registros de resultados.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from app.config.settings import settings
from app.core.exceptions import ConfigurationError
from app.core.expression import Expression, parse_expression
from app.models.stack_model import DEFAULT_OPERATOR_SYMBOLS, OPERATORS_BY_SYMBOL


class StrategyKind(str, Enum):
    """Familias de estrategias de adquisición."""
    UNIFORM = "uniform"
    NORMAL = "normal"
    UNCERTAINTY = "uncertainty"
    DIVERSITY = "diversity"
    PARETO = "pareto"


class UncertaintyKind(str, Enum):
    """Métricas de incertidumbre del ensamble."""
    STD_OVER_MEAN = "stdmean"
    TRSTD_OVER_TRMEAN = "trstdtrmean"
    STD_OVER_TRMEAN = "stdtrmean"
    STD = "std"
    DIFFERENTIAL_ENTROPY = "diffentropy"


class OptimizerKind(str, Enum):
    """Optimizadores continuos para maximizar incertidumbre."""
    LOCAL = "local"
    DE = "de"


class DiversityKind(str, Enum):
    """Métricas de diversidad de datos."""
    MIN_DISTANCE = "mindist"
    MEAN_DISTANCE = "meandist"
    JOINT_CORRELATION = "corr"
    AUTO = "auto"


DEFAULT_TRIM_FRACTION = 0.3

STRATEGY_GRAMMAR = (
    "uniform | normal | "
    "uncertainty:<local|de>:<stdmean|trstdtrmean|stdtrmean|std|diffentropy> | "
    "diversity:<mindist|meandist|corr|auto> | "
    "pareto[:<n_candidates>[:<uncertainty>[:<diversity>]]]"
)


# --------------------------------------------------------------------------- #
# Parámetros de evolución
# --------------------------------------------------------------------------- #

class EvolutionParams(BaseModel):
    """Parámetros de StackGP (tasas en porcentaje)."""

    model_config = ConfigDict(validate_assignment=True)

    mutation_rate: float = Field(default=79.0, ge=0, le=100, description="% de hijos por mutación")
    crossover_rate: float = Field(default=11.0, ge=0, le=100, description="% de hijos por cruce")
    spawn_rate: float = Field(default=10.0, ge=0, le=100, description="% de modelos nuevos aleatorios")
    elitism_rate: float = Field(default=10.0, ge=0, le=100, description="% de élite copiada sin cambios")
    selection_rate: float = Field(default=20.0, ge=0, le=100, description="% de sobrevivientes por torneo")
    tournament_size: int = Field(default=5, ge=1)
    population_size: int = Field(default=300, ge=2)
    parallel_runs: int = Field(default=4, ge=1, description="Islas independientes por iteración")
    generations_per_iteration: int = Field(default=100, ge=1)

    # Inicialización y registro
    max_initial_ops: int = Field(default=5, ge=0, description="Operadores máximos de un modelo nuevo")
    constant_probability: float = Field(default=0.2, ge=0, le=1, description="Probabilidad de terminal constante")
    constant_range: float = Field(default=10.0, gt=0, description="Constantes en U[-r, r]")
    seed_fraction: float = Field(default=0.1, gt=0, le=1, description="Fracción de mejores modelos reusados como semilla")
    operators: List[str] = Field(default_factory=lambda: list(DEFAULT_OPERATOR_SYMBOLS))

    @field_validator("operators")
    @classmethod
    def validate_operators(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("operators no puede estar vacío")
        unknown = [s for s in v if s not in OPERATORS_BY_SYMBOL]
        if unknown:
            raise ValueError(f"operadores desconocidos: {unknown}")
        return v

    @model_validator(mode="after")
    def validate_rates(self) -> "EvolutionParams":
        total = self.mutation_rate + self.crossover_rate + self.spawn_rate
        if not math.isclose(total, 100.0, abs_tol=1e-9):
            raise ValueError(f"mutation + crossover + spawn deben sumar 100 (suman {total})")
        if self.elitism_rate + self.selection_rate > 100.0:
            raise ValueError("elitism_rate + selection_rate no pueden superar 100")
        return self


# --------------------------------------------------------------------------- #
# Estrategias
# --------------------------------------------------------------------------- #

class AcquisitionStrategy(BaseModel):
    """Estrategia de selección del siguiente punto."""

    model_config = ConfigDict(frozen=True)

    kind: StrategyKind
    uncertainty_metric: Optional[UncertaintyKind] = None
    optimizer: Optional[OptimizerKind] = None
    diversity_metric: Optional[DiversityKind] = None
    n_candidates: int = Field(default_factory=lambda: settings.candidate_points, ge=1)
    trim_fraction: float = Field(default=DEFAULT_TRIM_FRACTION, ge=0, lt=0.5)

    @model_validator(mode="before")
    @classmethod
    def fill_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("kind") in (StrategyKind.PARETO, "pareto"):
            data = dict(data)
            data.setdefault("uncertainty_metric", UncertaintyKind.DIFFERENTIAL_ENTROPY)
            data.setdefault("diversity_metric", DiversityKind.MIN_DISTANCE)
            if data["uncertainty_metric"] is None:
                data["uncertainty_metric"] = UncertaintyKind.DIFFERENTIAL_ENTROPY
            if data["diversity_metric"] is None:
                data["diversity_metric"] = DiversityKind.MIN_DISTANCE
        return data

    @model_validator(mode="after")
    def validate_components(self) -> "AcquisitionStrategy":
        if self.kind == StrategyKind.UNCERTAINTY and (self.uncertainty_metric is None or self.optimizer is None):
            raise ValueError("uncertainty requiere métrica y optimizador")
        if self.kind == StrategyKind.DIVERSITY and self.diversity_metric is None:
            raise ValueError("diversity requiere métrica")
        return self

    @property
    def spec(self) -> str:
        """Forma textual canónica (la misma que acepta ``parse_strategy``)."""
        if self.kind == StrategyKind.UNCERTAINTY:
            return f"uncertainty:{self.optimizer.value}:{self.uncertainty_metric.value}"
        if self.kind == StrategyKind.DIVERSITY:
            return f"diversity:{self.diversity_metric.value}"
        if self.kind == StrategyKind.PARETO:
            default = (
                self.n_candidates == settings.candidate_points
                and self.uncertainty_metric == UncertaintyKind.DIFFERENTIAL_ENTROPY
                and self.diversity_metric == DiversityKind.MIN_DISTANCE
            )
            if default:
                return "pareto"
            return f"pareto:{self.n_candidates}:{self.uncertainty_metric.value}:{self.diversity_metric.value}"
        return self.kind.value

    def __str__(self) -> str:
        return self.spec


def parse_strategy(text: str) -> AcquisitionStrategy:
    """
    Parsea la mini-gramática de estrategias.

    Examples:
        >>> parse_strategy("uncertainty:de:diffentropy").optimizer
        <OptimizerKind.DE: 'de'>

    Raises:
        ConfigurationError: Si el texto no corresponde a ninguna estrategia
    """
    def fail(reason: str) -> ConfigurationError:
        return ConfigurationError(
            f"Estrategia inválida '{text}': {reason}. Válidas: {STRATEGY_GRAMMAR}",
            details={"strategy": text},
        )

    if not text or not text.strip():
        raise fail("vacía")
    parts = [p.strip().lower() for p in text.strip().split(":")]
    head, args = parts[0], parts[1:]

    try:
        if head in ("uniform", "normal"):
            if args:
                raise fail("no admite argumentos")
            return AcquisitionStrategy(kind=StrategyKind(head))

        if head == "uncertainty":
            if len(args) != 2:
                raise fail("se esperaba uncertainty:<optimizador>:<métrica>")
            return AcquisitionStrategy(
                kind=StrategyKind.UNCERTAINTY,
                optimizer=OptimizerKind(args[0]),
                uncertainty_metric=UncertaintyKind(args[1]),
            )

        if head == "diversity":
            if len(args) != 1:
                raise fail("se esperaba diversity:<métrica>")
            return AcquisitionStrategy(kind=StrategyKind.DIVERSITY, diversity_metric=DiversityKind(args[0]))

        if head == "pareto":
            if len(args) > 3:
                raise fail("demasiados argumentos")
            payload: Dict[str, Any] = {"kind": StrategyKind.PARETO}
            if len(args) >= 1:
                payload["n_candidates"] = int(args[0])
            if len(args) >= 2:
                payload["uncertainty_metric"] = UncertaintyKind(args[1])
            if len(args) >= 3:
                payload["diversity_metric"] = DiversityKind(args[2])
            return AcquisitionStrategy(**payload)
    except ConfigurationError:
        raise
    except ValueError as e:
        raise fail(str(e).splitlines()[0])

    raise fail(f"tipo desconocido '{head}'")


# --------------------------------------------------------------------------- #
# Problemas
# --------------------------------------------------------------------------- #

class ProblemSpec(BaseModel):
    """Problema: fórmula oráculo (opcional si etiqueta un humano), variables y cotas."""

    id: str = Field(..., min_length=1)
    expression: Optional[str] = None
    variables: List[str] = Field(..., min_length=1)
    bounds: List[Tuple[float, float]]
    max_points: int = Field(default=1000, ge=3)

    _oracle: Optional[Expression] = PrivateAttr(default=None)

    @field_validator("bounds")
    @classmethod
    def validate_bounds(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for lo, hi in v:
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise ValueError(f"cota inválida ({lo}, {hi}): se requiere lo < hi finitos")
        return v

    @model_validator(mode="after")
    def validate_expression(self) -> "ProblemSpec":
        if len(self.bounds) != len(self.variables):
            raise ValueError("se requiere una cota por variable")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("nombres de variables repetidos")
        if self.expression is not None:
            parse_expression(self.expression, self.variables)
        return self

    @property
    def dims(self) -> int:
        return len(self.variables)

    @property
    def oracle(self) -> Optional[Expression]:
        """Fórmula parseada; ``None`` si el problema no tiene oráculo."""
        if self._oracle is None and self.expression is not None:
            self._oracle = parse_expression(self.expression, self.variables)
        return self._oracle


# --------------------------------------------------------------------------- #
# Resultados
# --------------------------------------------------------------------------- #

class IterationLog(BaseModel):
    """Entrada del log de un ensayo: un punto agregado."""

    iteration: int = Field(..., ge=0)
    point: List[float]
    label: float
    uncertainty: Optional[float] = None
    diversity: Optional[float] = None
    best_fitness: float
    ensemble_size: int = 0
    best_model: Optional[str] = None


class TrialResult(BaseModel):
    """Resultado de un ensayo de aprendizaje activo."""

    problem_id: str
    strategy: str
    trial: int = 0
    seed: Optional[int] = None
    points_used: int
    solved: bool
    aborted: bool = False
    best_fitness: Optional[float] = None
    best_model: Optional[str] = None
    iterations: List[IterationLog] = Field(default_factory=list)


class CampaignResult(BaseModel):
    """Agregado por problema y estrategia."""

    problem_id: str
    strategy: str
    max_points: int
    points_used: List[int] = Field(default_factory=list)
    solved: List[bool] = Field(default_factory=list)
    median: float
    censored: int = 0
    aborted: int = 0


class PairwiseComparison(BaseModel):
    """Comparación de una estrategia contra otra en el mismo problema."""

    problem_id: str
    strategy: str
    baseline: str
    median: float
    baseline_median: float
    u_statistic: float
    p_value: float
    outcome: str  # outperform | underperform | tie
    significant: bool


class RunConfig(BaseModel):
    """Configuración completa de una campaña de benchmark."""

    problems_file: str
    problem_ids: Optional[List[str]] = None
    strategies: List[str] = Field(default_factory=lambda: ["uniform", "pareto"])
    trials: int = Field(default=25, ge=1)
    master_seed: int = Field(default=0, ge=0)
    evolution: EvolutionParams = Field(default_factory=EvolutionParams)
    output_dir: str = "./results"
    n_jobs: int = Field(default=1, ge=1)

    @field_validator("strategies")
    @classmethod
    def validate_strategies(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("se requiere al menos una estrategia")
        return [parse_strategy(s).spec for s in v]


class SessionState(BaseModel):
    """Estado persistido de una sesión interactiva de sugerencias."""

    version: int = 1
    variables: List[str]
    bounds: List[Tuple[float, float]]
    strategy: str
    evolution: EvolutionParams = Field(default_factory=EvolutionParams)
    seed: int
    iteration: int = 0
    inputs: List[List[float]] = Field(default_factory=list)
    labels: List[float] = Field(default_factory=list)
    pending: List[List[float]] = Field(default_factory=list)
    population: List[Dict[str, Any]] = Field(default_factory=list)
    rng_state: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("strategy")
    @classmethod
    def validate_strategy(cls, v: str) -> str:
        return parse_strategy(v).spec

    @model_validator(mode="after")
    def validate_shapes(self) -> "SessionState":
        dims = len(self.variables)
        if len(self.bounds) != dims:
            raise ValueError("se requiere una cota por variable")
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs y labels deben tener la misma longitud")
        for row in list(self.inputs) + list(self.pending):
            if len(row) != dims:
                raise ValueError("fila con dimensión incorrecta")
        return self
