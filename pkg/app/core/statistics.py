"""
Estadísticos usados para comparar estrategias de adquisición.

Medianas con censura, Mann-Whitney U (exacto o aproximación normal),
Pearson R² y Spearman rho con rangos medios.
"""

from typing import Sequence, Tuple

import numpy as np
from scipy import stats

from app.core.exceptions import UndefinedStatisticError

# Por encima de este n combinado (o con empates) se usa la aproximación normal
EXACT_MANN_WHITNEY_MAX_N = 16


def censored_median(points_used: Sequence[float], max_points: int) -> float:
    """
    Mediana de puntos usados contando los ensayos censurados en ``max_points``.

    Un valor mayor que el tope se recorta al tope, de modo que la censura
    nunca reduce la mediana.
    """
    values = np.minimum(np.asarray(points_used, dtype=float), float(max_points))
    if values.size == 0:
        return float("nan")
    return float(np.median(values))


def mann_whitney(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """
    Test U de Mann-Whitney a dos colas.

    Exacto por enumeración cuando ``|a| + |b| <= 16`` y no hay empates; en otro
    caso, aproximación normal con corrección por empates y por continuidad.

    Returns:
        (U, p): U de la primera muestra y p-valor a dos colas

    Examples:
        >>> mann_whitney([1, 2, 3], [4, 5, 6])
        (0.0, 0.1)
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size < 1 or y.size < 1:
        raise ValueError("mann_whitney requiere muestras no vacías")

    pooled = np.concatenate([x, y])
    if np.all(pooled == pooled[0]):
        # Todo empatado: la varianza del estadístico es nula
        return float(x.size * y.size / 2.0), 1.0

    has_ties = np.unique(pooled).size < pooled.size
    method = "exact" if (pooled.size <= EXACT_MANN_WHITNEY_MAX_N and not has_ties) else "asymptotic"
    result = stats.mannwhitneyu(x, y, alternative="two-sided", use_continuity=True, method=method)
    return float(result.statistic), float(min(1.0, result.pvalue))


def pearson_r2(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Pearson R² entre dos muestras.

    Raises:
        UndefinedStatisticError: Si alguna muestra tiene varianza nula
        ValueError: Si las longitudes difieren o hay menos de 2 valores
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.size < 2:
        raise ValueError("pearson_r2 requiere dos muestras de igual longitud >= 2")
    if np.ptp(xa) == 0 or np.ptp(ya) == 0:
        raise UndefinedStatisticError("Pearson R²", "varianza nula")
    r = stats.pearsonr(xa, ya)[0]
    return float(r * r)


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Correlación de rangos de Spearman (rangos medios para empates)."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.size < 2:
        raise ValueError("spearman_rho requiere dos muestras de igual longitud >= 2")
    rho = stats.spearmanr(xa, ya)[0]
    return float(rho)
