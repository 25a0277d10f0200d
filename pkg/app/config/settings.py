"""
Configuración del sistema usando Pydantic Settings (Pydantic v2).
Carga todas las variables desde archivo .env. Los nombres de las variables de
entorno se derivan del nombre del campo (case-insensitive): p. ej. el campo
``al_output_dir`` se lee de ``AL_OUTPUT_DIR``.
"""

import logging
import warnings

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configuración principal del sistema."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Artefactos y problemas
    al_output_dir: str = Field(default="./results", description="Directorio por defecto para CSV/JSONL de campañas")
    problems_file: str = Field(default="data/problems.txt", description="Archivo de problemas por defecto")

    # Paralelismo (joblib). Los resultados no dependen de este valor.
    n_jobs: int = Field(default=1, description="Workers de joblib para islas y ensayos")

    # Protocolo de aprendizaje activo
    default_max_points: int = Field(default=1000, description="Tope de puntos por ensayo (censura)")
    validation_points: int = Field(default=1000, description="Tamaño de la grilla de validación por ensayo")
    candidate_points: int = Field(default=10000, description="Tamaño de la nube de candidatos (Pareto/diversidad)")
    default_bounds_lo: float = Field(default=1.0, description="Cota inferior cuando el problema no la declara")
    default_bounds_hi: float = Field(default=5.0, description="Cota superior cuando el problema no la declara")

    # Logging Configuration
    log_level: str = Field(default="INFO", description="Nivel de logging")

    # App metadata
    app_name: str = "Symbolic Regression Active Learning"
    app_version: str = "1.0.0"

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Valida que el nivel de log sea válido."""
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'log_level debe ser uno de: {valid_levels}')
        return v.upper()

    @field_validator('n_jobs', 'default_max_points', 'validation_points', 'candidate_points')
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Los contadores deben ser positivos."""
        if v < 1:
            raise ValueError('el valor debe ser >= 1')
        return v

    @property
    def log_level_int(self) -> int:
        """Retorna el nivel de log como entero."""
        return getattr(logging, self.log_level, logging.INFO)

    @property
    def default_bounds(self) -> tuple:
        """Cotas por defecto (lo, hi) para variables sin rango declarado."""
        return (self.default_bounds_lo, self.default_bounds_hi)

    def validate_configuration(self) -> None:
        """Valida la configuración completa del sistema."""
        if self.default_bounds_lo >= self.default_bounds_hi:
            raise ValueError("default_bounds_lo debe ser menor que default_bounds_hi")

        if self.candidate_points < 1000:
            warnings.warn(
                "candidate_points < 1000: la nube de candidatos cubre mal el espacio "
                "en problemas de más de 3 dimensiones."
            )


# Instancia global de configuración
settings = Settings()
