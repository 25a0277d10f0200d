"""
Configuración de logging estructurado en JSON.
Utiliza structlog para logs estructurados y configurables.

Los logs salen por stderr: stdout queda reservado para la salida de los
comandos y para el protocolo interactivo ``QUERY``/``LABEL``.
"""

import logging
import sys
from typing import Any

import numpy as np
import structlog
from structlog.types import EventDict

from app.config.settings import settings


def add_app_context(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    """Añade contexto de la aplicación a todos los logs."""
    event_dict["app"] = settings.app_name
    event_dict["version"] = settings.app_version
    return event_dict


def _to_plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def coerce_numpy_values(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    """Convierte escalares y arreglos de numpy a valores JSON planos."""
    for key, value in list(event_dict.items()):
        event_dict[key] = _to_plain(value)
    return event_dict


def setup_logging() -> None:
    """
    Configura el sistema de logging estructurado.
    Debe llamarse al inicio de cada comando.
    """
    log_level = getattr(logging, settings.log_level.upper(), logging.INFO)

    structlog.configure(
        processors=[
            add_app_context,
            coerce_numpy_values,
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=log_level,
    )

    # Silenciar librerías de terceros
    logging.getLogger("joblib").setLevel(logging.WARNING)
    logging.getLogger("sklearn").setLevel(logging.WARNING)


def get_logger(name: str = None) -> structlog.BoundLogger:
    """
    Obtiene un logger estructurado.

    Args:
        name: Nombre del logger (opcional)

    Returns:
        Logger estructurado configurado
    """
    return structlog.get_logger(name)


logger = get_logger(__name__)
