"""
Parser de expresiones oráculo por descenso recursivo.

Gramática (de menor a mayor precedencia)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # asociativo a derecha
    atom   := NUMBER | IDENT '(' expr ')' | IDENT | '(' expr ')'

Funciones: sin, cos, exp, log, sqrt, abs. Constante con nombre: pi.
Las variables se ligan por nombre a índices de columna.

La evaluación es vectorizada con numpy y nunca atrapa valores no finitos:
``log(-1)`` devuelve nan y ``1/0`` devuelve inf.
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from app.core.exceptions import ExpressionSyntaxError, UnknownIdentifierError

FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

CONSTANTS: Dict[str, float] = {"pi": math.pi}

_BINARY: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | op | end
    text: str
    position: int


def tokenize(text: str) -> List[Token]:
    """
    Divide el texto en tokens.

    Raises:
        ExpressionSyntaxError: Si aparece un carácter fuera de la gramática
    """
    tokens: List[Token] = []
    pos = 0
    length = len(text)
    while pos < length:
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            raise ExpressionSyntaxError(f"Carácter inesperado '{text[pos]}'", position=pos, text=text)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append(Token(kind, match.group(kind), start))
        pos = match.end()
    tokens.append(Token("end", "", length))
    return tokens


# --------------------------------------------------------------------------- #
# Nodos del árbol
# --------------------------------------------------------------------------- #

class Node:
    """Nodo de expresión evaluable sobre una matriz de filas (n, D)."""

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def variables(self) -> List[int]:
        return []


@dataclass(frozen=True)
class Number(Node):
    value: float

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], self.value, dtype=float)

    def to_text(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Constant(Node):
    name: str

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], CONSTANTS[self.name], dtype=float)

    def to_text(self) -> str:
        return self.name


@dataclass(frozen=True)
class Variable(Node):
    name: str
    index: int

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return X[:, self.index].astype(float)

    def to_text(self) -> str:
        return self.name

    def variables(self) -> List[int]:
        return [self.index]


@dataclass(frozen=True)
class Negate(Node):
    operand: Node

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return -self.operand.evaluate(X)

    def to_text(self) -> str:
        return f"(-{self.operand.to_text()})"

    def variables(self) -> List[int]:
        return self.operand.variables()


@dataclass(frozen=True)
class BinaryOp(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return _BINARY[self.op](self.left.evaluate(X), self.right.evaluate(X))

    def to_text(self) -> str:
        return f"({self.left.to_text()} {self.op} {self.right.to_text()})"

    def variables(self) -> List[int]:
        return self.left.variables() + self.right.variables()


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return FUNCTIONS[self.func](self.arg.evaluate(X))

    def to_text(self) -> str:
        return f"{self.func}({self.arg.to_text()})"

    def variables(self) -> List[int]:
        return self.arg.variables()


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0
        self.variables = {name: i for i, name in enumerate(variables)}

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, text: str) -> Token:
        token = self.current
        if token.kind != "op" or token.text != text:
            found = token.text or "fin de expresión"
            raise ExpressionSyntaxError(f"Se esperaba '{text}' y se encontró '{found}'", token.position, self.text)
        return self._advance()

    def parse(self) -> Node:
        node = self._expr()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(f"Token sobrante '{self.current.text}'", self.current.position, self.text)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            node = BinaryOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self._advance().text
            node = BinaryOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self.current.kind == "op" and self.current.text in "+-":
            sign = self._advance().text
            operand = self._unary()
            return Negate(operand) if sign == "-" else operand
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self.current.kind == "op" and self.current.text == "^":
            self._advance()
            return BinaryOp("^", base, self._unary())
        return base

    def _atom(self) -> Node:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Number(float(token.text))
        if token.kind == "ident":
            self._advance()
            if token.text in FUNCTIONS:
                self._expect("(")
                arg = self._expr()
                self._expect(")")
                return Call(token.text, arg)
            if token.text in self.variables:
                return Variable(token.text, self.variables[token.text])
            if token.text in CONSTANTS:
                return Constant(token.text)
            raise UnknownIdentifierError(token.text, token.position)
        if token.kind == "op" and token.text == "(":
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        found = token.text or "fin de expresión"
        raise ExpressionSyntaxError(f"Se esperaba un operando y se encontró '{found}'", token.position, self.text)


class Expression:
    """Expresión oráculo ya parseada y ligada a nombres de variables."""

    def __init__(self, text: str, variables: Sequence[str], root: Node):
        self.text = text
        self.variable_names: Tuple[str, ...] = tuple(variables)
        self.root = root

    @property
    def dims(self) -> int:
        return len(self.variable_names)

    def evaluate_batch(self, X) -> np.ndarray:
        """Evalúa la expresión en cada fila de ``X`` (n, D)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        with np.errstate(all="ignore"):
            return np.asarray(self.root.evaluate(X), dtype=float)

    def evaluate(self, row) -> float:
        """Evalúa la expresión en un único vector D."""
        return float(self.evaluate_batch(np.asarray(row, dtype=float).reshape(1, -1))[0])

    def __call__(self, row) -> float:
        return self.evaluate(row)

    def to_text(self) -> str:
        """Forma canónica totalmente parentizada; vuelve a parsear a la misma función."""
        return self.root.to_text()

    def __str__(self) -> str:
        return self.to_text()

    def __repr__(self) -> str:
        return f"Expression({self.text!r}, variables={list(self.variable_names)})"


def parse_expression(text: str, variables: Sequence[str]) -> Expression:
    """
    Parsea una expresión oráculo.

    Args:
        text: Texto de la fórmula (p. ej. ``"0.5*sin(x-y)-sin(x)"``)
        variables: Nombres de variables en orden de índice

    Returns:
        Expression: Forma evaluable determinista

    Raises:
        ExpressionSyntaxError: Error de sintaxis con posición
        UnknownIdentifierError: Identificador no ligado

    Examples:
        >>> parse_expression("2^3", []).evaluate([])
        8.0
    """
    if text is None or not text.strip():
        raise ExpressionSyntaxError("Expresión vacía", position=0, text=text)
    root = _Parser(text, variables).parse()
    return Expression(text, variables, root)
