"""
Adquisición de datos: selección de ensamble, métricas de incertidumbre y de
diversidad, y el combinador de Pareto incertidumbre-diversidad.

Todas las puntuaciones que consume el bucle de aprendizaje activo están
orientadas a maximizar; ``-inf`` es el centinela de "nunca elegir".
"""

import math
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans

from app.core.exceptions import DimensionError
from app.core.logging import get_logger
from app.models.al_models import DEFAULT_TRIM_FRACTION, DiversityKind, UncertaintyKind
from app.models.stack_model import StackModel, TrainingSet

logger = get_logger(__name__)

MAX_ENSEMBLE_SIZE = 10
KMEANS_MAX_ITER = 50
SENTINEL = -math.inf

# Por encima de esta dimensión no se agregan las esquinas de la caja
MAX_CORNER_DIMS = 10

Rows = Union[TrainingSet, np.ndarray]


def _rows(data: Rows) -> np.ndarray:
    if isinstance(data, TrainingSet):
        return data.inputs
    return np.atleast_2d(np.asarray(data, dtype=float))


# --------------------------------------------------------------------------- #
# Ensamble
# --------------------------------------------------------------------------- #

def ensemble_select(
    models: Sequence[StackModel],
    data: TrainingSet,
    rng: np.random.Generator,
    max_size: int = MAX_ENSEMBLE_SIZE,
) -> List[StackModel]:
    """
    Elige modelos distintos que ajustan mejor cada región de los datos.

    Agrupa las filas con k-means (k = min(|data|, max_size)); para cada grupo,
    en orden de índice, toma el modelo de menor RMSE sobre las filas del grupo
    que aún no fue elegido. Los grupos vacíos se omiten.
    """
    unique: List[StackModel] = []
    seen = set()
    for model in models:
        key = model.structural_key()
        if key not in seen:
            seen.add(key)
            unique.append(model)

    k = min(len(data), max_size)
    if k == 0 or not unique:
        return []

    if k == 1:
        labels = np.zeros(len(data), dtype=int)
    else:
        kmeans = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=1,
            max_iter=KMEANS_MAX_ITER,
            random_state=int(rng.integers(np.iinfo(np.int32).max)),
        )
        labels = kmeans.fit_predict(data.inputs)

    predictions = ensemble_responses(unique, data.inputs)
    ensemble: List[StackModel] = []
    chosen = set()
    for cluster in range(k):
        rows = labels == cluster
        if not rows.any():
            logger.debug("Cluster vacío omitido", cluster=cluster)
            continue
        with np.errstate(all="ignore"):
            residuals = predictions[:, rows] - data.labels[rows]
            errors = np.sqrt(np.mean(residuals * residuals, axis=1))
        errors = np.where(np.isfinite(errors), errors, np.inf)
        for index in np.argsort(errors, kind="stable"):
            if int(index) not in chosen:
                chosen.add(int(index))
                ensemble.append(unique[int(index)])
                break
    return ensemble


def ensemble_responses(ensemble: Sequence[StackModel], X) -> np.ndarray:
    """Predicciones alineadas, forma (modelos, puntos)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not ensemble:
        return np.empty((0, X.shape[0]))
    return np.vstack([model.predict(X) for model in ensemble])


# --------------------------------------------------------------------------- #
# Incertidumbre
# --------------------------------------------------------------------------- #

def vasicek_window(n: int) -> int:
    """Ventana floor(√n) recortada para cumplir 2m < n."""
    return max(1, min(int(math.isqrt(n)), (n - 1) // 2))


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        ratio = numerator / denominator
    return np.where((denominator > 0) & np.isfinite(ratio), ratio, SENTINEL)


def _trimmed_std(sorted_responses: np.ndarray, trim: float) -> np.ndarray:
    trimmed = stats.trimboth(sorted_responses, trim, axis=0)
    if trimmed.shape[0] < 2:
        return np.full(sorted_responses.shape[1], np.nan)
    return np.std(trimmed, axis=0, ddof=1)


def _column_scores(kind: UncertaintyKind, responses: np.ndarray, trim: float) -> np.ndarray:
    """Métrica por columna; todas las columnas son finitas y tienen n >= 2."""
    n = responses.shape[0]
    with np.errstate(all="ignore"):
        if kind == UncertaintyKind.DIFFERENTIAL_ENTROPY:
            if n < 3:
                return np.full(responses.shape[1], SENTINEL)
            entropy = stats.differential_entropy(
                responses, window_length=vasicek_window(n), method="vasicek", axis=0
            )
            return np.where(np.isfinite(entropy), entropy, SENTINEL)

        std = np.std(responses, axis=0, ddof=1)
        if kind == UncertaintyKind.STD:
            return std
        magnitude = np.abs(responses)
        if kind == UncertaintyKind.STD_OVER_MEAN:
            return _safe_ratio(std, np.mean(magnitude, axis=0))
        if kind == UncertaintyKind.STD_OVER_TRMEAN:
            return _safe_ratio(std, stats.trim_mean(magnitude, trim, axis=0))
        if kind == UncertaintyKind.TRSTD_OVER_TRMEAN:
            trimmed_std = _trimmed_std(np.sort(responses, axis=0), trim)
            ratio = _safe_ratio(trimmed_std, stats.trim_mean(magnitude, trim, axis=0))
            return np.where(np.isfinite(trimmed_std), ratio, SENTINEL)
    raise ValueError(f"Métrica de incertidumbre desconocida: {kind}")


def uncertainty_scores(
    kind: UncertaintyKind,
    responses: np.ndarray,
    trim: float = DEFAULT_TRIM_FRACTION,
) -> np.ndarray:
    """
    Incertidumbre por punto a partir de respuestas del ensamble (modelos, puntos).

    Las respuestas no finitas se descartan por punto; con menos de 2 respuestas
    finitas el punto recibe el centinela ``-inf``.
    """
    kind = UncertaintyKind(kind)
    responses = np.asarray(responses, dtype=float)
    if responses.ndim == 1:
        responses = responses.reshape(-1, 1)
    scores = np.full(responses.shape[1], SENTINEL)
    if responses.shape[0] < 2:
        return scores

    finite = np.isfinite(responses)
    clean = finite.all(axis=0)
    if clean.any():
        scores[clean] = _column_scores(kind, responses[:, clean], trim)
    for column in np.flatnonzero(~clean):
        values = responses[finite[:, column], column]
        if values.size >= 2:
            scores[column] = _column_scores(kind, values.reshape(-1, 1), trim)[0]
    return scores


def uncertainty(
    kind: UncertaintyKind,
    ensemble: Sequence[StackModel],
    point,
    trim: float = DEFAULT_TRIM_FRACTION,
) -> float:
    """Incertidumbre del ensamble en un único punto."""
    responses = ensemble_responses(ensemble, np.asarray(point, dtype=float).reshape(1, -1))
    return float(uncertainty_scores(kind, responses, trim)[0])


# --------------------------------------------------------------------------- #
# Diversidad
# --------------------------------------------------------------------------- #

def min_distance(data: Rows, points) -> np.ndarray:
    return cdist(np.atleast_2d(points), _rows(data)).min(axis=1)


def mean_distance(data: Rows, points) -> np.ndarray:
    return cdist(np.atleast_2d(points), _rows(data)).mean(axis=1)


def joint_correlation(data: Rows, points) -> np.ndarray:
    """
    Media del R² de Pearson entre cada punto y cada fila, vistos como vectores D.

    Un par con un vector sin varianza aporta R² = 1.

    Raises:
        DimensionError: Si D < 3
    """
    rows = _rows(data)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dims = rows.shape[1]
    if dims < 3:
        raise DimensionError("joint_correlation requiere D >= 3", expected=3, got=dims)

    centered_rows = rows - rows.mean(axis=1, keepdims=True)
    centered_points = points - points.mean(axis=1, keepdims=True)
    row_norms = np.linalg.norm(centered_rows, axis=1)
    point_norms = np.linalg.norm(centered_points, axis=1)
    denominator = np.outer(point_norms, row_norms)
    with np.errstate(all="ignore"):
        r = (centered_points @ centered_rows.T) / denominator
    r2 = np.where(denominator > 0, np.clip(r * r, 0.0, 1.0), 1.0)
    return r2.mean(axis=1)


def resolve_diversity_kind(kind: DiversityKind, dims: int) -> DiversityKind:
    kind = DiversityKind(kind)
    if kind == DiversityKind.AUTO:
        return DiversityKind.JOINT_CORRELATION if dims >= 3 else DiversityKind.MIN_DISTANCE
    return kind


def diversity(kind: DiversityKind, data: Rows, point) -> float:
    """Valor crudo de la métrica (para joint_correlation, menor es más diverso)."""
    rows = _rows(data)
    kind = resolve_diversity_kind(kind, rows.shape[1])
    point = np.asarray(point, dtype=float).reshape(1, -1)
    if kind == DiversityKind.MIN_DISTANCE:
        return float(min_distance(rows, point)[0])
    if kind == DiversityKind.MEAN_DISTANCE:
        return float(mean_distance(rows, point)[0])
    return float(joint_correlation(rows, point)[0])


def diversity_scores(kind: DiversityKind, data: Rows, points) -> np.ndarray:
    """Puntuaciones a maximizar; joint_correlation se niega."""
    rows = _rows(data)
    kind = resolve_diversity_kind(kind, rows.shape[1])
    if kind == DiversityKind.MIN_DISTANCE:
        return min_distance(rows, points)
    if kind == DiversityKind.MEAN_DISTANCE:
        return mean_distance(rows, points)
    return -joint_correlation(rows, points)


# --------------------------------------------------------------------------- #
# Pareto
# --------------------------------------------------------------------------- #

class Candidate(NamedTuple):
    point: np.ndarray
    uncertainty: float
    diversity: float


def pareto_front_indices(u, d) -> np.ndarray:
    """
    Índices no dominados maximizando (u, d), ordenados por u descendente.

    Barrido O(n log n): dentro de cada grupo de igual u sólo el d máximo puede
    estar en el frente, y lo está si supera todo d de u estrictamente mayor.
    """
    u = np.nan_to_num(np.asarray(u, dtype=float), nan=-np.inf)
    d = np.nan_to_num(np.asarray(d, dtype=float), nan=-np.inf)
    if u.size == 0:
        return np.empty(0, dtype=int)

    order = np.lexsort((np.arange(u.size), -d, -u))
    front: List[int] = []
    best_d = -np.inf
    start = 0
    while start < order.size:
        stop = start
        while stop < order.size and u[order[stop]] == u[order[start]]:
            stop += 1
        group = order[start:stop]
        group_max = d[group[0]]
        if start == 0 or group_max > best_d:
            front.extend(int(i) for i in group if d[i] == group_max)
        best_d = max(best_d, group_max)
        start = stop
    return np.asarray(front, dtype=int)


def pareto_front(candidates: Sequence[Candidate]) -> List[Candidate]:
    """Candidatos no dominados en (incertidumbre, diversidad), por incertidumbre descendente."""
    if not candidates:
        return []
    indices = pareto_front_indices([c.uncertainty for c in candidates], [c.diversity for c in candidates])
    return [candidates[i] for i in indices]


def pick_median(front: Sequence) -> object:
    """Elemento ``front[(k-1)//2]``: en k par cae del lado de mayor incertidumbre."""
    if len(front) == 0:
        raise ValueError("pick_median requiere un frente no vacío")
    return front[(len(front) - 1) // 2]


# --------------------------------------------------------------------------- #
# Nubes de candidatos y análisis de métricas
# --------------------------------------------------------------------------- #

def box_corners(bounds) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float)
    dims = bounds.shape[0]
    grid = np.array(np.meshgrid(*[[0, 1]] * dims, indexing="ij")).reshape(dims, -1).T
    return np.where(grid == 0, bounds[:, 0], bounds[:, 1])


def candidate_cloud(
    bounds,
    n: int,
    rng: np.random.Generator,
    include_corners: bool = True,
) -> np.ndarray:
    """
    ``n`` puntos uniformes en la caja; con D <= 10 las primeras filas son las
    esquinas de la caja.
    """
    bounds = np.asarray(bounds, dtype=float)
    dims = bounds.shape[0]
    parts = []
    if include_corners and dims <= MAX_CORNER_DIMS:
        corners = box_corners(bounds)
        parts.append(corners[:n])
    remaining = n - sum(p.shape[0] for p in parts)
    if remaining > 0:
        parts.append(rng.uniform(bounds[:, 0], bounds[:, 1], size=(remaining, dims)))
    return np.vstack(parts) if parts else np.empty((0, dims))


class MetricRecord(NamedTuple):
    iteration: int
    min_distance: float
    mean_distance: float
    joint_correlation: Optional[float]


def metric_comparison(
    data: Rows,
    bounds,
    selector: DiversityKind,
    n_iter: int,
    rng: np.random.Generator,
    n_candidates: int = 10_000,
) -> List[MetricRecord]:
    """
    Selecciona ``n_iter`` puntos de forma voraz con ``selector`` sobre nubes
    nuevas en cada iteración y registra las tres métricas del punto elegido
    respecto de los datos previos. Se permite re-elegir puntos existentes.
    """
    rows = _rows(data).copy()
    dims = rows.shape[1]
    selector = resolve_diversity_kind(selector, dims)
    if selector == DiversityKind.JOINT_CORRELATION and dims < 3:
        raise DimensionError("joint_correlation requiere D >= 3", expected=3, got=dims)

    records: List[MetricRecord] = []
    for iteration in range(n_iter):
        cloud = candidate_cloud(bounds, n_candidates, rng)
        scores = diversity_scores(selector, rows, cloud)
        point = cloud[int(np.argmax(scores))].reshape(1, -1)
        records.append(
            MetricRecord(
                iteration=iteration,
                min_distance=float(min_distance(rows, point)[0]),
                mean_distance=float(mean_distance(rows, point)[0]),
                joint_correlation=float(joint_correlation(rows, point)[0]) if dims >= 3 else None,
            )
        )
        rows = np.vstack([rows, point])
    return records
