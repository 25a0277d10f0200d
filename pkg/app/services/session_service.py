"""
Sesiones de sugerencia con etiquetado humano.

Una sesión vive en un único archivo JSON: cotas, estrategia, parámetros,
datos etiquetados, consultas pendientes, la población serializada y el
estado del generador aleatorio. Cargar y volver a guardar una sesión
reproduce exactamente las mismas sugerencias.
"""

import json
import os
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from app.core.exceptions import ConfigurationError, SessionError, SymbolicRegressionError
from app.core.logging import get_logger
from app.models.al_models import EvolutionParams, SessionState, parse_strategy
from app.models.stack_model import StackModel, TrainingSet, validate_bounds
from app.services.al_service import initial_points, select_next
from app.services.gp_service import evolve, select_seeds

logger = get_logger(__name__)


class SuggestSession:
    """Estado vivo de una sesión: datos, población y generador aleatorio."""

    def __init__(self, state: SessionState, path: Optional[str] = None):
        self.state = state
        self.path = path
        self.strategy = parse_strategy(state.strategy)
        self.rng = np.random.default_rng(state.seed)
        if state.rng_state:
            self.rng.bit_generator.state = state.rng_state
        self.data = TrainingSet(state.bounds, state.inputs or None, state.labels or None)
        self.population: List[StackModel] = [StackModel.from_dict(m) for m in state.population]

    # ------------------------------------------------------------------ #
    # Creación y persistencia
    # ------------------------------------------------------------------ #

    @classmethod
    def create(
        cls,
        variables: Sequence[str],
        bounds,
        strategy: str,
        seed: int,
        evolution: Optional[EvolutionParams] = None,
        path: Optional[str] = None,
    ) -> "SuggestSession":
        """Sesión nueva con los 3 puntos iniciales pendientes de etiquetar."""
        bounds = validate_bounds(bounds)
        if len(variables) != bounds.shape[0]:
            raise ConfigurationError("Se requiere una cota por variable", details={"dims": len(variables)})
        state = SessionState(
            variables=list(variables),
            bounds=[tuple(b) for b in bounds.tolist()],
            strategy=parse_strategy(strategy).spec,
            evolution=evolution or EvolutionParams(),
            seed=seed,
        )
        session = cls(state, path)
        session.state.pending = [p.tolist() for p in initial_points(session.data, session.rng)]
        logger.info("Sesión creada", dims=len(variables), strategy=session.strategy.spec, seed=seed)
        return session

    @classmethod
    def load(cls, path: str) -> "SuggestSession":
        """
        Raises:
            SessionError: Si el archivo no existe o está corrupto
        """
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(SessionState.model_validate(payload), path)
        except FileNotFoundError:
            raise SessionError(f"No existe la sesión {path}; usar --init para crearla", session_path=path)
        except (OSError, json.JSONDecodeError, PydanticValidationError) as e:
            raise SessionError(f"Sesión corrupta: {str(e).splitlines()[0]}", session_path=path)
        except SymbolicRegressionError as e:
            raise SessionError(f"Sesión corrupta: {e.message}", session_path=path)
        except (KeyError, TypeError, ValueError) as e:
            raise SessionError(f"Sesión corrupta: {e}", session_path=path)

    def save(self, path: Optional[str] = None) -> Path:
        """Escritura atómica (archivo temporal + reemplazo)."""
        target = Path(path or self.path)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.state.inputs = self.data.inputs.tolist()
        self.state.labels = self.data.labels.tolist()
        self.state.population = [m.to_dict() for m in self.population]
        self.state.rng_state = self.rng.bit_generator.state
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_text(self.state.model_dump_json(indent=2), encoding="utf-8")
        os.replace(tmp, target)
        self.path = str(target)
        return target

    # ------------------------------------------------------------------ #
    # Ciclo sugerir / etiquetar
    # ------------------------------------------------------------------ #

    @property
    def pending(self) -> List[List[float]]:
        return self.state.pending

    @property
    def best(self) -> Optional[StackModel]:
        return self.population[0] if self.population else None

    def suggest(self) -> List[float]:
        """
        Punto a etiquetar. Si no hay pendientes, corre un paso de adquisición y
        lo deja pendiente.
        """
        if self.pending:
            return self.pending[0]
        if not self.population:
            raise SessionError("La sesión no tiene modelos; etiquetar primero los puntos iniciales", self.path)
        selection = select_next(self.strategy, self.population, self.data, self.rng)
        point = self.data.clamp(selection.point).tolist()
        self.state.pending.append(point)
        self.state.iteration += 1
        logger.info("Punto sugerido", iteration=self.state.iteration, point=point)
        return point

    def record_label(self, value: float) -> Tuple[List[float], Optional[StackModel]]:
        """
        Etiqueta el primer punto pendiente; sin pendientes restantes, evoluciona.

        Raises:
            SessionError: Si no hay punto pendiente
        """
        if not self.pending:
            raise SessionError("No hay punto pendiente para etiquetar", self.path)
        point = self.state.pending.pop(0)
        self.data.append(point, float(value))

        if not self.pending and len(self.data) >= 2:
            seeds = select_seeds(self.population, self.state.evolution.seed_fraction)
            self.population = evolve(self.data, seeds, self.state.evolution, self.rng)
            best = self.best
            logger.info(
                "Población actualizada",
                points=len(self.data),
                best_fitness=best.fitness_error,
                best_model=best.to_infix(self.state.variables),
            )
        return point, self.best
