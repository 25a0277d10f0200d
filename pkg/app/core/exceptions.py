"""
Excepciones personalizadas del motor de regresión simbólica.
Define errores específicos del dominio y manejo estructurado.

Las degeneraciones numéricas dentro de la evolución nunca levantan excepción
(el fitness las mapea a 1.0); estas clases cubren errores del llamador y de E/S.
"""

from typing import Any, Dict, Optional
from datetime import datetime, timezone


class SymbolicRegressionError(Exception):
    """Excepción base del sistema."""

    def __init__(
        self,
        message: str,
        exit_code: int = 1,
        error_code: str = "INTERNAL_ERROR",
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code
        self.details = details or {}
        self.timestamp = datetime.now(timezone.utc).isoformat()
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convierte la excepción a diccionario (para logs y diagnósticos)."""
        return {
            "error": self.error_code,
            "message": self.message,
            "timestamp": self.timestamp,
            "details": self.details
        }


class ConfigurationError(SymbolicRegressionError):
    """Error de configuración del sistema o de la línea de comandos."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=2,
            error_code="CONFIGURATION_ERROR",
            details=details
        )


class ValidationError(SymbolicRegressionError):
    """Error de validación de datos."""

    def __init__(self, message: str, field: str = None):
        details = {"field": field} if field else {}
        super().__init__(
            message=message,
            exit_code=2,
            error_code="VALIDATION_ERROR",
            details=details
        )


class ExpressionSyntaxError(SymbolicRegressionError):
    """Error de sintaxis en una expresión oráculo."""

    def __init__(self, message: str, position: int, text: str = None):
        details = {"position": position}
        if text is not None:
            details["text"] = text
        super().__init__(
            message=f"{message} (posición {position})",
            exit_code=2,
            error_code="EXPRESSION_SYNTAX_ERROR",
            details=details
        )
        self.position = position


class UnknownIdentifierError(SymbolicRegressionError):
    """Identificador desconocido en una expresión oráculo."""

    def __init__(self, name: str, position: int):
        super().__init__(
            message=f"Identificador desconocido '{name}' (posición {position})",
            exit_code=2,
            error_code="UNKNOWN_IDENTIFIER",
            details={"name": name, "position": position}
        )
        self.name = name
        self.position = position


class DimensionError(SymbolicRegressionError):
    """Dimensión incompatible con la operación pedida."""

    def __init__(self, message: str, expected: int = None, got: int = None):
        details = {}
        if expected is not None:
            details["expected"] = expected
        if got is not None:
            details["got"] = got
        super().__init__(
            message=message,
            exit_code=2,
            error_code="DIMENSION_ERROR",
            details=details
        )


class ProblemFileError(SymbolicRegressionError):
    """Error leyendo o interpretando un archivo de problemas."""

    def __init__(self, message: str, file_path: str = None, line: int = None):
        details = {}
        if file_path:
            details["file_path"] = file_path
        if line is not None:
            details["line"] = line
        super().__init__(
            message=f"{message} ({file_path}:{line})" if file_path and line else message,
            exit_code=2,
            error_code="PROBLEM_FILE_ERROR",
            details=details
        )


class AlignmentError(SymbolicRegressionError):
    """La alineación lineal no es posible (salida del modelo sin varianza)."""

    def __init__(self, message: str = "Salida del modelo con varianza nula"):
        super().__init__(
            message=message,
            exit_code=1,
            error_code="ALIGNMENT_ERROR"
        )


class UndefinedStatisticError(SymbolicRegressionError):
    """Estadístico indefinido para la muestra dada."""

    def __init__(self, statistic: str, reason: str):
        super().__init__(
            message=f"{statistic} indefinido: {reason}",
            exit_code=1,
            error_code="UNDEFINED_STATISTIC",
            details={"statistic": statistic, "reason": reason}
        )


class LabelingAbortedError(SymbolicRegressionError):
    """El etiquetador interactivo abortó el ensayo."""

    def __init__(self, query_index: int = None):
        details = {"query_index": query_index} if query_index is not None else {}
        super().__init__(
            message="Etiquetado abortado por el usuario",
            exit_code=1,
            error_code="LABELING_ABORTED",
            details=details
        )


class SessionError(SymbolicRegressionError):
    """Sesión de sugerencias inexistente, corrupta o en estado inválido."""

    def __init__(self, message: str, session_path: str = None):
        details = {"session_path": session_path} if session_path else {}
        super().__init__(
            message=message,
            exit_code=2,
            error_code="SESSION_ERROR",
            details=details
        )
