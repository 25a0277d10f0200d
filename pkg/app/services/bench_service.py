"""
Servicio de benchmark: registro de problemas, campañas de ensayos con semillas
pareadas, agregados con censura, comparaciones Mann-Whitney y artefactos
CSV/JSONL deterministas.
"""

import csv
import itertools
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from app.config.settings import settings
from app.core.exceptions import (
    ConfigurationError,
    ProblemFileError,
    SymbolicRegressionError,
    UndefinedStatisticError,
    ValidationError,
)
from app.core.logging import get_logger
from app.core.statistics import censored_median, mann_whitney, pearson_r2, spearman_rho
from app.models.al_models import (
    CampaignResult,
    EvolutionParams,
    PairwiseComparison,
    ProblemSpec,
    RunConfig,
    StrategyKind,
    TrialResult,
    parse_strategy,
)
from app.services.acquisition_service import MetricRecord
from app.services.al_service import OracleLabeler, run_al

logger = get_logger(__name__)

SIGNIFICANCE_LEVEL = 0.05
BASELINE_STRATEGY = StrategyKind.UNIFORM.value

TRIALS_COLUMNS = ["problem", "strategy", "trial", "seed", "points_used", "solved"]
SUMMARY_COLUMNS = [
    "problem", "strategy", "trials", "median", "censored", "aborted", "solved",
    "p_vs_uniform", "outcome_vs_uniform", "significant_vs_uniform",
]
COMPARISON_COLUMNS = [
    "problem", "strategy", "baseline", "median", "baseline_median",
    "u_statistic", "p_value", "outcome", "significant",
]


# --------------------------------------------------------------------------- #
# Archivo de problemas
# --------------------------------------------------------------------------- #

def _parse_number(text: str, field: str, path: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ProblemFileError(f"Número inválido en '{field}': '{text}'", file_path=path, line=line)


def _parse_variables(field: str, path: str, line: int) -> Tuple[List[str], List[Tuple[float, float]]]:
    """Parsea ``[idx:]name[=lo..hi], ...`` respetando los índices si se dan."""
    entries = []
    for position, raw in enumerate(p.strip() for p in field.split(",")):
        if not raw:
            raise ProblemFileError("Variable vacía", file_path=path, line=line)
        index = position
        if ":" in raw:
            index_text, raw = raw.split(":", 1)
            try:
                index = int(index_text.strip())
            except ValueError:
                raise ProblemFileError(f"Índice de variable inválido '{index_text}'", file_path=path, line=line)
        bounds = settings.default_bounds
        if "=" in raw:
            name, range_text = (s.strip() for s in raw.split("=", 1))
            if ".." not in range_text:
                raise ProblemFileError(f"Rango inválido '{range_text}' (se espera lo..hi)", file_path=path, line=line)
            lo_text, hi_text = range_text.split("..", 1)
            bounds = (_parse_number(lo_text.strip(), name, path, line), _parse_number(hi_text.strip(), name, path, line))
        else:
            name = raw.strip()
        entries.append((index, name, bounds))

    indices = sorted(e[0] for e in entries)
    if indices != list(range(len(entries))):
        raise ProblemFileError("Los índices de variables deben ser 0..D-1 sin repetir", file_path=path, line=line)
    entries.sort(key=lambda e: e[0])
    return [e[1] for e in entries], [e[2] for e in entries]


def parse_problem_line(text: str, path: str = "<memoria>", line: int = 0) -> ProblemSpec:
    """
    Parsea una línea ``id | expresión | variables | max_points``.

    ``max_points`` es opcional (por defecto ``settings.default_max_points``) y
    las variables sin rango usan ``settings.default_bounds``.

    Raises:
        ProblemFileError: Con archivo y línea del error
    """
    fields = [f.strip() for f in text.split("|")]
    if len(fields) not in (3, 4):
        raise ProblemFileError("Se esperan 3 o 4 campos separados por '|'", file_path=path, line=line)
    problem_id, expression, variables = fields[:3]
    max_points = settings.default_max_points
    if len(fields) == 4 and fields[3]:
        try:
            max_points = int(fields[3])
        except ValueError:
            raise ProblemFileError(f"max_points inválido '{fields[3]}'", file_path=path, line=line)

    names, bounds = _parse_variables(variables, path, line)
    try:
        return ProblemSpec(id=problem_id, expression=expression, variables=names, bounds=bounds, max_points=max_points)
    except SymbolicRegressionError as e:
        raise ProblemFileError(f"Problema '{problem_id}': {e.message}", file_path=path, line=line)
    except ValueError as e:
        raise ProblemFileError(f"Problema '{problem_id}' inválido: {e}", file_path=path, line=line)


def load_problems(path: Optional[str] = None) -> List[ProblemSpec]:
    """
    Lee un archivo de problemas (líneas vacías y ``#`` se ignoran).

    Raises:
        ProblemFileError: Archivo ilegible, línea inválida o id repetido
    """
    path = path or settings.problems_file
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ProblemFileError(f"No se pudo leer el archivo de problemas: {e}", file_path=path)

    problems: List[ProblemSpec] = []
    seen = set()
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        problem = parse_problem_line(text, path, number)
        if problem.id in seen:
            raise ProblemFileError(f"Id de problema repetido '{problem.id}'", file_path=path, line=number)
        seen.add(problem.id)
        problems.append(problem)

    logger.info("Problemas cargados", file_path=path, count=len(problems))
    return problems


def select_problems(problems: Sequence[ProblemSpec], ids: Optional[Sequence[str]]) -> List[ProblemSpec]:
    if not ids:
        return list(problems)
    by_id = {p.id: p for p in problems}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ConfigurationError(
            f"Problemas desconocidos: {', '.join(missing)}. Disponibles: {', '.join(by_id)}",
            details={"missing": missing},
        )
    return [by_id[i] for i in ids]


# --------------------------------------------------------------------------- #
# Campañas
# --------------------------------------------------------------------------- #

def trial_seed(master_seed: int, trial: int) -> int:
    """Semilla del ensayo; la misma para todas las estrategias (ensayos pareados)."""
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def _run_trial(problem: ProblemSpec, strategy: str, params: EvolutionParams, trial: int, seed: int) -> TrialResult:
    rng = np.random.default_rng(seed)
    return run_al(
        problem,
        parse_strategy(strategy),
        params,
        OracleLabeler(problem.oracle),
        rng,
        trial=trial,
        seed=seed,
        n_jobs=1,
    )


def aggregate(problem: ProblemSpec, strategy: str, trials: Sequence[TrialResult]) -> CampaignResult:
    """Mediana con censura sobre los ensayos no abortados."""
    completed = [t for t in trials if not t.aborted]
    aborted = len(trials) - len(completed)
    if aborted:
        logger.warning("Ensayos abortados excluidos", problem=problem.id, strategy=strategy, aborted=aborted)
    points = [t.points_used for t in completed]
    return CampaignResult(
        problem_id=problem.id,
        strategy=strategy,
        max_points=problem.max_points,
        points_used=points,
        solved=[t.solved for t in completed],
        median=censored_median(points, problem.max_points),
        censored=sum(1 for t in completed if not t.solved and t.points_used >= problem.max_points),
        aborted=aborted,
    )


def run_campaign(
    problem: ProblemSpec,
    strategies: Sequence[str],
    trials: int,
    params: EvolutionParams,
    master_seed: int,
    n_jobs: Optional[int] = None,
) -> Tuple[List[CampaignResult], List[TrialResult]]:
    """
    Corre ``trials`` ensayos por estrategia con semillas pareadas.

    Returns:
        (agregados por estrategia, ensayos en orden estrategia/ensayo)
    """
    if trials < 1:
        raise ConfigurationError("trials debe ser >= 1", details={"trials": trials})
    specs = [parse_strategy(s).spec for s in strategies]
    jobs = [(spec, trial, trial_seed(master_seed, trial)) for spec in specs for trial in range(trials)]

    logger.info(
        "Campaña iniciada",
        problem=problem.id,
        strategies=specs,
        trials=trials,
        master_seed=master_seed,
    )

    results: List[TrialResult] = Parallel(n_jobs=n_jobs or settings.n_jobs)(
        delayed(_run_trial)(problem, spec, params, trial, seed) for spec, trial, seed in jobs
    )

    campaigns = [
        aggregate(problem, spec, [r for r in results if r.strategy == spec])
        for spec in specs
    ]
    for campaign in campaigns:
        logger.info(
            "Campaña completada",
            problem=problem.id,
            strategy=campaign.strategy,
            median=campaign.median,
            censored=campaign.censored,
            aborted=campaign.aborted,
        )
    return campaigns, results


# --------------------------------------------------------------------------- #
# Comparaciones
# --------------------------------------------------------------------------- #

def _outcome(median: float, baseline_median: float) -> str:
    if median < baseline_median:
        return "outperform"
    if median > baseline_median:
        return "underperform"
    return "tie"


def compare_samples(
    problem_id: str,
    strategy: str,
    baseline: str,
    sample: Sequence[float],
    baseline_sample: Sequence[float],
) -> PairwiseComparison:
    """Mann-Whitney de ``strategy`` contra ``baseline`` (menos puntos es mejor)."""
    u, p = mann_whitney(sample, baseline_sample)
    median = float(np.median(sample))
    baseline_median = float(np.median(baseline_sample))
    return PairwiseComparison(
        problem_id=problem_id,
        strategy=strategy,
        baseline=baseline,
        median=median,
        baseline_median=baseline_median,
        u_statistic=u,
        p_value=p,
        outcome=_outcome(median, baseline_median),
        significant=p < SIGNIFICANCE_LEVEL,
    )


def compare_campaigns(campaigns: Sequence[CampaignResult]) -> List[PairwiseComparison]:
    """
    Todas las parejas de estrategias del mismo problema. Si una de las dos es
    la línea base uniforme, queda como ``baseline``.
    """
    comparisons: List[PairwiseComparison] = []
    for a, b in itertools.combinations(campaigns, 2):
        if a.problem_id != b.problem_id or not a.points_used or not b.points_used:
            continue
        if a.strategy == BASELINE_STRATEGY:
            a, b = b, a
        comparisons.append(compare_samples(
            a.problem_id, a.strategy, b.strategy,
            [min(p, a.max_points) for p in a.points_used],
            [min(p, b.max_points) for p in b.points_used],
        ))
    return comparisons


# --------------------------------------------------------------------------- #
# Artefactos
# --------------------------------------------------------------------------- #

def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if value.is_integer():
            return str(int(value))
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(v) for v in row])


def write_artifacts(
    output_dir: str,
    campaigns: Sequence[CampaignResult],
    trials: Sequence[TrialResult],
    comparisons: Sequence[PairwiseComparison],
) -> Dict[str, Path]:
    """
    Escribe ``trials.csv``, ``summary.csv``, ``comparisons.csv`` y
    ``iterations.jsonl``. El contenido depende sólo de los resultados.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trials": out / "trials.csv",
        "summary": out / "summary.csv",
        "comparisons": out / "comparisons.csv",
        "iterations": out / "iterations.jsonl",
    }

    _write_csv(paths["trials"], TRIALS_COLUMNS, [
        (t.problem_id, t.strategy, t.trial, t.seed, t.points_used, t.solved) for t in trials
    ])

    versus_baseline = {
        (c.problem_id, c.strategy): c for c in comparisons if c.baseline == BASELINE_STRATEGY
    }
    summary_rows = []
    for campaign in campaigns:
        vs = versus_baseline.get((campaign.problem_id, campaign.strategy))
        summary_rows.append((
            campaign.problem_id,
            campaign.strategy,
            len(campaign.points_used),
            campaign.median,
            campaign.censored,
            campaign.aborted,
            sum(campaign.solved),
            vs.p_value if vs else None,
            vs.outcome if vs else None,
            vs.significant if vs else None,
        ))
    _write_csv(paths["summary"], SUMMARY_COLUMNS, summary_rows)

    _write_csv(paths["comparisons"], COMPARISON_COLUMNS, [
        (c.problem_id, c.strategy, c.baseline, c.median, c.baseline_median,
         c.u_statistic, c.p_value, c.outcome, c.significant)
        for c in comparisons
    ])

    with paths["iterations"].open("w", encoding="utf-8", newline="\n") as handle:
        for trial in trials:
            handle.write(trial.model_dump_json() + "\n")

    logger.info("Artefactos escritos", output_dir=str(out), trials=len(trials))
    return paths


def run_benchmark(config: RunConfig) -> Tuple[List[CampaignResult], List[PairwiseComparison], Dict[str, Path]]:
    """Carga problemas, corre una campaña por problema y escribe los artefactos."""
    problems = select_problems(load_problems(config.problems_file), config.problem_ids)
    campaigns: List[CampaignResult] = []
    trials: List[TrialResult] = []
    for problem in problems:
        problem_campaigns, problem_trials = run_campaign(
            problem, config.strategies, config.trials, config.evolution, config.master_seed, config.n_jobs
        )
        campaigns.extend(problem_campaigns)
        trials.extend(problem_trials)
    comparisons = compare_campaigns(campaigns)
    paths = write_artifacts(config.output_dir, campaigns, trials, comparisons)
    return campaigns, comparisons, paths


# --------------------------------------------------------------------------- #
# Lectura de campañas y comparación de archivos
# --------------------------------------------------------------------------- #

def read_trials_csv(path: str, strategy: Optional[str] = None) -> Tuple[str, str, List[int]]:
    """
    Lee un ``trials.csv`` de un único problema y estrategia.

    Returns:
        (problem, strategy, points_used)

    Raises:
        ValidationError: Columna faltante o valor inválido
        ConfigurationError: Archivo ilegible o con varios problemas/estrategias
    """
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            missing = [c for c in ("problem", "strategy", "points_used") if c not in (reader.fieldnames or [])]
            if missing:
                raise ValidationError(f"{path}: faltan columnas {', '.join(missing)}", field=missing[0])
            rows = list(reader)
    except OSError as e:
        raise ConfigurationError(f"No se pudo leer {path}: {e}", details={"path": path})

    if strategy is not None:
        wanted = parse_strategy(strategy).spec
        rows = [r for r in rows if r["strategy"] == wanted]
    if not rows:
        raise ValidationError(f"{path}: sin ensayos", field="points_used")

    problems = sorted({r["problem"] for r in rows})
    strategies = sorted({r["strategy"] for r in rows})
    if len(problems) != 1:
        raise ConfigurationError(f"{path}: contiene varios problemas ({', '.join(problems)})", details={"path": path})
    if len(strategies) != 1:
        raise ConfigurationError(
            f"{path}: contiene varias estrategias ({', '.join(strategies)}); elegir una con --strategy",
            details={"path": path},
        )
    try:
        points = [int(r["points_used"]) for r in rows]
    except ValueError:
        raise ValidationError(f"{path}: points_used no entero", field="points_used")
    return problems[0], strategies[0], points


def compare_files(
    path_a: str,
    path_b: str,
    strategy_a: Optional[str] = None,
    strategy_b: Optional[str] = None,
) -> PairwiseComparison:
    """
    Compara dos campañas del mismo problema.

    Raises:
        ConfigurationError: Si los problemas difieren
    """
    problem_a, name_a, points_a = read_trials_csv(path_a, strategy_a)
    problem_b, name_b, points_b = read_trials_csv(path_b, strategy_b)
    if problem_a != problem_b:
        raise ConfigurationError(
            f"Las campañas son de problemas distintos: {problem_a} vs {problem_b}",
            details={"a": problem_a, "b": problem_b},
        )
    return compare_samples(problem_a, name_a, name_b, points_a, points_b)


# --------------------------------------------------------------------------- #
# Análisis de métricas de diversidad
# --------------------------------------------------------------------------- #

METRIC_COLUMNS = ("min_distance", "mean_distance", "joint_correlation")


def summarize_metric_records(records: Sequence[MetricRecord]) -> List[Dict[str, object]]:
    """
    R² de Pearson y rho de Spearman entre cada par de métricas registradas.
    Un estadístico indefinido (varianza nula) se informa como ``None``.
    """
    columns = {
        name: [getattr(r, name) for r in records]
        for name in METRIC_COLUMNS
        if records and all(getattr(r, name) is not None for r in records)
    }
    summary = []
    for a, b in itertools.combinations(columns, 2):
        x, y = columns[a], columns[b]
        r2: Optional[float] = None
        rho: Optional[float] = None
        if len(x) >= 2:
            try:
                r2 = pearson_r2(x, y)
            except UndefinedStatisticError:
                r2 = None
            rho = spearman_rho(x, y)
            if not math.isfinite(rho):
                rho = None
        summary.append({"metric_a": a, "metric_b": b, "pearson_r2": r2, "spearman_rho": rho})
    return summary


def write_metric_table(path: str, records: Sequence[MetricRecord]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(target, ("iteration",) + METRIC_COLUMNS, [tuple(r) for r in records])
    return target
