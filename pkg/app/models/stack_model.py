"""
Representación de modelos StackGP y del conjunto de entrenamiento.

Un modelo son dos pilas: operadores y terminales (variables o constantes).
Los operadores se ejecutan desde el índice 0; cada uno toma sus argumentos
primero de la pila de evaluación (resultados intermedios) y después del frente
de los terminales que quedan sin consumir.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import DimensionError, ValidationError


# --------------------------------------------------------------------------- #
# Operadores
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class OperatorDef:
    """Operador del registro: símbolo, aridad y función numérica pura."""

    symbol: str
    arity: int
    apply: Callable[..., np.ndarray] = field(compare=False, repr=False)
    infix: bool = False

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError(f"El operador '{self.symbol}' debe tener aridad >= 1")


# Sin operadores protegidos: un no finito se propaga y el fitness lo penaliza.
# Los ufuncs de numpy se serializan por referencia (joblib los envía a los workers).
DEFAULT_OPERATORS: Tuple[OperatorDef, ...] = (
    OperatorDef("+", 2, np.add, infix=True),
    OperatorDef("-", 2, np.subtract, infix=True),
    OperatorDef("*", 2, np.multiply, infix=True),
    OperatorDef("/", 2, np.divide, infix=True),
    OperatorDef("pow", 2, np.power),
    OperatorDef("sin", 1, np.sin),
    OperatorDef("cos", 1, np.cos),
    OperatorDef("exp", 1, np.exp),
    OperatorDef("log", 1, np.log),
    OperatorDef("sqrt", 1, np.sqrt),
)

OPERATORS_BY_SYMBOL: Dict[str, OperatorDef] = {op.symbol: op for op in DEFAULT_OPERATORS}

DEFAULT_OPERATOR_SYMBOLS: Tuple[str, ...] = tuple(op.symbol for op in DEFAULT_OPERATORS)


def build_registry(symbols: Optional[Iterable[str]] = None) -> Tuple[OperatorDef, ...]:
    """
    Construye el registro de operadores a partir de sus símbolos.

    Raises:
        ValidationError: Si algún símbolo no existe o la lista está vacía
    """
    if symbols is None:
        return DEFAULT_OPERATORS
    registry = []
    for symbol in symbols:
        if symbol not in OPERATORS_BY_SYMBOL:
            raise ValidationError(
                f"Operador desconocido '{symbol}'. Válidos: {', '.join(DEFAULT_OPERATOR_SYMBOLS)}",
                field="operators",
            )
        registry.append(OPERATORS_BY_SYMBOL[symbol])
    if not registry:
        raise ValidationError("El registro de operadores no puede estar vacío", field="operators")
    return tuple(registry)


# --------------------------------------------------------------------------- #
# Terminales
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Var:
    """Terminal variable: índice de columna en [0, D)."""

    index: int


Terminal = Union[Var, float]


def terminal_key(terminal: Terminal) -> Tuple[str, Any]:
    if isinstance(terminal, Var):
        return ("v", terminal.index)
    return ("c", float(terminal))


def operand_demand(op_stack: Sequence[OperatorDef]) -> List[int]:
    """
    Cantidad de terminales que consume cada operador al ejecutarse.

    La pila de evaluación no depende de los terminales, así que la demanda se
    calcula sin mirar la pila de datos.
    """
    demand = []
    depth = 0
    for op in op_stack:
        from_stack = min(depth, op.arity)
        demand.append(op.arity - from_stack)
        depth = depth - from_stack + 1
    return demand


def consumption_ranges(op_stack: Sequence[OperatorDef]) -> List[Tuple[int, int]]:
    """Rango [inicio, fin) de la pila de datos consumido por cada operador."""
    ranges = []
    start = 0
    for need in operand_demand(op_stack):
        ranges.append((start, start + need))
        start += need
    return ranges


def required_terminals(op_stack: Sequence[OperatorDef]) -> int:
    """Terminales necesarios para ejecutar sin desborde (1 si no hay operadores)."""
    if not op_stack:
        return 1
    return sum(operand_demand(op_stack))


# --------------------------------------------------------------------------- #
# Modelo
# --------------------------------------------------------------------------- #

@dataclass(eq=False)
class StackModel:
    """
    Ecuación candidata como dos pilas más el fitness y la alineación en caché.

    ``complexity`` es siempre ``len(op_stack) + len(data_stack)``.
    """

    op_stack: List[OperatorDef]
    data_stack: List[Terminal]
    fitness_error: Optional[float] = None
    align: Optional[Tuple[float, float]] = None

    @property
    def complexity(self) -> int:
        return len(self.op_stack) + len(self.data_stack)

    @property
    def is_feasible(self) -> bool:
        return len(self.data_stack) >= required_terminals(self.op_stack)

    def structural_key(self) -> Tuple[Tuple[str, ...], Tuple[Tuple[str, Any], ...]]:
        """Clave de igualdad estructural (constantes comparadas exactamente)."""
        return (
            tuple(op.symbol for op in self.op_stack),
            tuple(terminal_key(t) for t in self.data_stack),
        )

    def copy(self) -> "StackModel":
        return StackModel(list(self.op_stack), list(self.data_stack), self.fitness_error, self.align)

    def clear_cache(self) -> None:
        self.fitness_error = None
        self.align = None

    def uses_variables(self) -> bool:
        return any(isinstance(t, Var) for t in self.data_stack)

    # ------------------------------------------------------------------ #
    # Evaluación
    # ------------------------------------------------------------------ #

    def output(self, X) -> np.ndarray:
        """
        Salida cruda del modelo en cada fila de ``X`` (n, D).

        Un modelo sin reparar que se queda sin operandos devuelve nan.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]

        def resolve(terminal: Terminal) -> np.ndarray:
            if isinstance(terminal, Var):
                return X[:, terminal.index]
            return np.full(n, float(terminal))

        if not self.op_stack:
            if not self.data_stack:
                return np.full(n, np.nan)
            return np.array(resolve(self.data_stack[0]), dtype=float)

        stack: List[np.ndarray] = []
        pointer = 0
        with np.errstate(all="ignore"):
            for op in self.op_stack:
                args = []
                for _ in range(op.arity):
                    if stack:
                        args.append(stack.pop())
                    elif pointer < len(self.data_stack):
                        args.append(resolve(self.data_stack[pointer]))
                        pointer += 1
                    else:
                        return np.full(n, np.nan)
                stack.append(np.broadcast_to(np.asarray(op.apply(*args), dtype=float), (n,)))
        return np.array(stack[-1], dtype=float)

    def predict(self, X) -> np.ndarray:
        """Salida alineada ``a1*ŷ + a0`` (cruda si el modelo no está alineado)."""
        raw = self.output(X)
        if self.align is None:
            return raw
        a0, a1 = self.align
        with np.errstate(all="ignore"):
            return a1 * raw + a0

    # ------------------------------------------------------------------ #
    # Presentación y serialización
    # ------------------------------------------------------------------ #

    def to_infix(self, variable_names: Optional[Sequence[str]] = None, aligned: bool = True) -> str:
        """
        Fórmula infija equivalente, p. ej. ``(2.0 * (x0 + x1))``.

        Con ``aligned=True`` y coeficientes presentes se envuelve como ``a1*(...) + a0``.
        """

        def name(terminal: Terminal) -> str:
            if isinstance(terminal, Var):
                if variable_names and terminal.index < len(variable_names):
                    return variable_names[terminal.index]
                return f"x{terminal.index}"
            return repr(float(terminal))

        if not self.op_stack:
            body = name(self.data_stack[0]) if self.data_stack else "nan"
        else:
            stack: List[str] = []
            pointer = 0
            for op in self.op_stack:
                args = []
                for _ in range(op.arity):
                    if stack:
                        args.append(stack.pop())
                    elif pointer < len(self.data_stack):
                        args.append(name(self.data_stack[pointer]))
                        pointer += 1
                    else:
                        args.append("?")
                if op.infix:
                    stack.append(f"({args[0]} {op.symbol} {args[1]})")
                else:
                    stack.append(f"{op.symbol}({', '.join(args)})")
            body = stack[-1]

        if aligned and self.align is not None:
            a0, a1 = self.align
            return f"{a1!r}*{body} + {a0!r}"
        return body

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ops": [op.symbol for op in self.op_stack],
            "data": [
                {"var": t.index} if isinstance(t, Var) else {"const": float(t)}
                for t in self.data_stack
            ],
            "fitness_error": self.fitness_error,
            "align": list(self.align) if self.align is not None else None,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "StackModel":
        """
        Reconstruye un modelo serializado con ``to_dict``.

        Raises:
            ValidationError: Si un operador o terminal no es válido
        """
        try:
            ops = [OPERATORS_BY_SYMBOL[symbol] for symbol in payload["ops"]]
        except KeyError as e:
            raise ValidationError(f"Operador desconocido en modelo serializado: {e}", field="ops")
        data: List[Terminal] = []
        for item in payload["data"]:
            if "var" in item:
                data.append(Var(int(item["var"])))
            elif "const" in item:
                data.append(float(item["const"]))
            else:
                raise ValidationError("Terminal sin 'var' ni 'const'", field="data")
        align = payload.get("align")
        return cls(
            op_stack=ops,
            data_stack=data,
            fitness_error=payload.get("fitness_error"),
            align=(float(align[0]), float(align[1])) if align is not None else None,
        )

    def __repr__(self) -> str:
        fitness = "None" if self.fitness_error is None else f"{self.fitness_error:.3g}"
        return f"StackModel({self.to_infix(aligned=False)}, fitness={fitness}, complexity={self.complexity})"


# --------------------------------------------------------------------------- #
# Datos de entrenamiento
# --------------------------------------------------------------------------- #

# Tolerancia por coordenada para considerar dos puntos iguales
DUPLICATE_TOLERANCE = 1e-9


def validate_bounds(bounds) -> np.ndarray:
    """
    Normaliza cotas a un arreglo (D, 2) con lo < hi.

    Raises:
        ValidationError: Si alguna cota es inválida
    """
    array = np.asarray(bounds, dtype=float)
    if array.ndim != 2 or array.shape[1] != 2 or array.shape[0] < 1:
        raise ValidationError("Las cotas deben ser D pares (lo, hi)", field="bounds")
    if not np.all(np.isfinite(array)):
        raise ValidationError("Las cotas deben ser finitas", field="bounds")
    if np.any(array[:, 0] >= array[:, 1]):
        raise ValidationError("Cada cota requiere lo < hi", field="bounds")
    return array


class TrainingSet:
    """Filas etiquetadas con cotas de muestreo por dimensión."""

    def __init__(self, bounds, inputs=None, labels=None):
        self.bounds = validate_bounds(bounds)
        dims = self.bounds.shape[0]
        self.inputs = np.empty((0, dims)) if inputs is None else np.atleast_2d(np.asarray(inputs, dtype=float))
        self.labels = np.empty(0) if labels is None else np.asarray(labels, dtype=float).reshape(-1)
        if self.inputs.size == 0:
            self.inputs = self.inputs.reshape(0, dims)
        if self.inputs.shape[1] != dims:
            raise DimensionError("Filas con dimensión distinta de las cotas", expected=dims, got=self.inputs.shape[1])
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValidationError("inputs y labels deben tener la misma longitud", field="labels")
        self.inputs = self.clamp(self.inputs)

    @property
    def dims(self) -> int:
        return self.bounds.shape[0]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def clamp(self, rows) -> np.ndarray:
        return np.clip(rows, self.bounds[:, 0], self.bounds[:, 1])

    def contains(self, row, tol: float = DUPLICATE_TOLERANCE) -> bool:
        """True si ``row`` coincide con una fila guardada (tolerancia por coordenada)."""
        if len(self) == 0:
            return False
        row = np.asarray(row, dtype=float).reshape(1, -1)
        return bool(np.any(np.all(np.abs(self.inputs - row) <= tol, axis=1)))

    def append(self, row, label: float) -> np.ndarray:
        """
        Agrega una fila etiquetada, recortada a las cotas.

        Returns:
            La fila efectivamente guardada
        """
        row = np.asarray(row, dtype=float).reshape(-1)
        if row.shape[0] != self.dims:
            raise DimensionError("Fila con dimensión incorrecta", expected=self.dims, got=row.shape[0])
        row = self.clamp(row)
        self.inputs = np.vstack([self.inputs, row])
        self.labels = np.append(self.labels, float(label))
        return row

    def copy(self) -> "TrainingSet":
        return TrainingSet(self.bounds.copy(), self.inputs.copy(), self.labels.copy())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bounds": self.bounds.tolist(),
            "inputs": self.inputs.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "TrainingSet":
        return cls(payload["bounds"], payload.get("inputs") or None, payload.get("labels") or None)
