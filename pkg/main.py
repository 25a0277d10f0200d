"""
Línea de comandos del motor de regresión simbólica con aprendizaje activo.

Subcomandos:
    bench        Campañas de benchmark (problemas x estrategias x ensayos)
    compare      Comparación Mann-Whitney entre dos archivos trials.csv
    suggest      Sesión persistente de sugerencias con etiquetado externo
    interactive  Ensayo completo etiquetado por stdin/stdout (QUERY/LABEL)
    analyze      Correlación entre métricas de diversidad

Códigos de salida: 0 éxito, 1 error en tiempo de ejecución, 2 error de
configuración o de entrada.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from app.config.settings import settings
from app.core.exceptions import ConfigurationError, SymbolicRegressionError
from app.core.logging import get_logger, setup_logging
from app.models.al_models import DiversityKind, EvolutionParams, ProblemSpec, RunConfig, parse_strategy
from app.services import acquisition_service as acquisition
from app.services import bench_service as bench
from app.services.al_service import InteractiveLabeler, run_al
from app.services.session_service import SuggestSession

logger = get_logger("cli")


# --------------------------------------------------------------------------- #
# Utilidades de argumentos
# --------------------------------------------------------------------------- #

def parse_bounds(text: Optional[str], dims: int) -> List[tuple]:
    """
    ``"0..6,0..6"`` -> [(0, 6), (0, 6)]. Un único rango se repite para todas
    las dimensiones; sin texto se usan las cotas por defecto.
    """
    if not text:
        return [settings.default_bounds] * dims
    ranges = []
    for chunk in text.split(","):
        lo, sep, hi = chunk.strip().partition("..")
        try:
            if not sep:
                raise ValueError(chunk)
            ranges.append((float(lo), float(hi)))
        except ValueError:
            raise ConfigurationError(f"Rango inválido '{chunk.strip()}': se espera lo..hi", details={"bounds": text})
    if len(ranges) == 1:
        ranges = ranges * dims
    if len(ranges) != dims:
        raise ConfigurationError(
            f"Se esperaban {dims} rangos y se recibieron {len(ranges)}",
            details={"bounds": text},
        )
    return ranges


def parse_variables(text: Optional[str], dims: Optional[int]) -> List[str]:
    if text:
        names = [v.strip() for v in text.split(",") if v.strip()]
        if dims is not None and len(names) != dims:
            raise ConfigurationError(f"--variables declara {len(names)} nombres para {dims} dimensiones")
        return names
    if dims is None or dims < 1:
        raise ConfigurationError("Se requiere --dims o --variables")
    return [f"x{i}" for i in range(dims)]


def evolution_from_args(args: argparse.Namespace) -> EvolutionParams:
    overrides = {
        "generations_per_iteration": args.generations,
        "population_size": args.population,
        "parallel_runs": args.parallel_runs,
        "elitism_rate": args.elitism,
    }
    return EvolutionParams(**{k: v for k, v in overrides.items() if v is not None})


def _add_evolution_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("evolución")
    group.add_argument("--generations", type=int, help="Generaciones por iteración (default: 100)")
    group.add_argument("--population", type=int, help="Tamaño de población por isla (default: 300)")
    group.add_argument("--parallel-runs", type=int, help="Islas independientes (default: 4)")
    group.add_argument("--elitism", type=float, help="Porcentaje de élite (default: 10)")


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    return f"{value:.6g}"


# --------------------------------------------------------------------------- #
# Subcomandos
# --------------------------------------------------------------------------- #

def cmd_bench(args: argparse.Namespace) -> int:
    config = RunConfig(
        problems_file=args.problems,
        problem_ids=args.problem or None,
        strategies=args.strategy or ["uniform", "pareto"],
        trials=args.trials,
        master_seed=args.seed,
        evolution=evolution_from_args(args),
        output_dir=args.out,
        n_jobs=args.n_jobs,
    )
    logger.info(
        "Benchmark iniciado",
        problems=config.problem_ids or "todos",
        strategies=config.strategies,
        trials=config.trials,
        seed=config.master_seed,
    )
    campaigns, comparisons, paths = bench.run_benchmark(config)

    print(f"{'problema':<14} {'estrategia':<28} {'mediana':>9} {'censurados':>10} {'resueltos':>10}")
    for c in campaigns:
        solved = f"{sum(c.solved)}/{len(c.solved)}"
        print(f"{c.problem_id:<14} {c.strategy:<28} {_fmt(c.median):>9} {c.censored:>10} {solved:>10}")
    for cmp in comparisons:
        if cmp.baseline != bench.BASELINE_STRATEGY:
            continue
        mark = "*" if cmp.significant else ""
        print(f"  {cmp.problem_id}: {cmp.strategy} vs {cmp.baseline} p={cmp.p_value:.4g}{mark} ({cmp.outcome})")
    print("\n✅ Artefactos:")
    for name, path in paths.items():
        print(f"   {name}: {path}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    result = bench.compare_files(args.campaign_a, args.campaign_b, args.strategy_a, args.strategy_b)
    verdict = "SIGNIFICANT" if result.significant else "NOT SIGNIFICANT"
    print(f"problema: {result.problem_id}")
    print(f"A: {result.strategy}  mediana={_fmt(result.median)}")
    print(f"B: {result.baseline}  mediana={_fmt(result.baseline_median)}")
    print(f"U={_fmt(result.u_statistic)}  p={_fmt(result.p_value)}")
    print(f"{verdict} (alfa={bench.SIGNIFICANCE_LEVEL})  resultado A vs B: {result.outcome}")
    return 0


def _print_query(index: int, point: Sequence[float]) -> None:
    print(f"QUERY {index} " + " ".join(repr(float(x)) for x in point))


def cmd_suggest(args: argparse.Namespace) -> int:
    path = Path(args.session)

    if args.init:
        if path.exists():
            raise ConfigurationError(f"La sesión {path} ya existe; borrarla o usar otra ruta")
        variables = parse_variables(args.variables, args.dims)
        session = SuggestSession.create(
            variables,
            parse_bounds(args.bounds, len(variables)),
            parse_strategy(args.strategy).spec,
            args.seed,
            evolution_from_args(args),
            str(path),
        )
        session.save()
        for offset, point in enumerate(session.pending):
            _print_query(len(session.data) + offset, point)
        return 0

    session = SuggestSession.load(str(path))

    if args.label is not None:
        index = len(session.data)
        point, best = session.record_label(args.label)
        session.save()
        print(f"LABELED {index} " + " ".join(repr(float(x)) for x in point) + f" = {args.label!r}")
        if best is not None:
            print(f"BEST fitness={_fmt(best.fitness_error)} model={best.to_infix(session.state.variables)}")
        return 0

    point = session.suggest()
    session.save()
    _print_query(len(session.data), point)
    return 0


def cmd_interactive(args: argparse.Namespace) -> int:
    variables = parse_variables(args.variables, args.dims)
    problem = ProblemSpec(
        id="interactive",
        variables=variables,
        bounds=parse_bounds(args.bounds, len(variables)),
        max_points=args.max_points,
    )
    rng = np.random.default_rng(args.seed)
    result = run_al(
        problem,
        parse_strategy(args.strategy),
        evolution_from_args(args),
        InteractiveLabeler(sys.stdin, sys.stdout),
        rng,
        seed=args.seed,
        n_jobs=args.n_jobs,
    )
    status = "ABORTED" if result.aborted else "DONE"
    print(f"{status} points={result.points_used} fitness={_fmt(result.best_fitness)} model={result.best_model}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    bounds = np.asarray(parse_bounds(args.bounds, args.dims), dtype=float)
    rng = np.random.default_rng(args.seed)
    start = rng.uniform(bounds[:, 0], bounds[:, 1], size=(args.initial, args.dims))
    records = acquisition.metric_comparison(
        start,
        bounds,
        DiversityKind(args.selector),
        args.iterations,
        rng,
        n_candidates=args.candidates,
    )
    table = bench.write_metric_table(args.out, records)
    for row in bench.summarize_metric_records(records):
        print(
            f"{row['metric_a']} vs {row['metric_b']}: "
            f"R2={_fmt(row['pearson_r2'])} rho={_fmt(row['spearman_rho'])}"
        )
    print(f"\n✅ Tabla de métricas: {table}")
    return 0


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sral",
        description="Regresión simbólica con programación genética y aprendizaje activo",
    )
    parser.add_argument("--verbose", action="store_true", help="Logging detallado")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="Campañas de benchmark")
    p.add_argument("--problems", default=settings.problems_file, help=f"Archivo de problemas (default: {settings.problems_file})")
    p.add_argument("--problem", action="append", help="Id de problema (repetible; default: todos)")
    p.add_argument("--strategy", action="append", help="Estrategia (repetible; default: uniform y pareto)")
    p.add_argument("--trials", type=int, default=25, help="Ensayos por estrategia (default: 25)")
    p.add_argument("--seed", type=int, default=0, help="Semilla maestra (default: 0)")
    p.add_argument("--out", default=settings.al_output_dir, help=f"Directorio de salida (default: {settings.al_output_dir})")
    p.add_argument("--n-jobs", type=int, default=settings.n_jobs, help="Workers de joblib para ensayos")
    _add_evolution_arguments(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("compare", help="Comparar dos campañas (Mann-Whitney U)")
    p.add_argument("campaign_a", help="trials.csv de la campaña A")
    p.add_argument("campaign_b", help="trials.csv de la campaña B")
    p.add_argument("--strategy-a", help="Estrategia a leer de A si el archivo tiene varias")
    p.add_argument("--strategy-b", help="Estrategia a leer de B si el archivo tiene varias")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("suggest", help="Sesión persistente de sugerencias")
    p.add_argument("--session", required=True, help="Archivo JSON de la sesión")
    p.add_argument("--init", action="store_true", help="Crear la sesión y emitir los puntos iniciales")
    p.add_argument("--dims", type=int, help="Dimensiones (con --init)")
    p.add_argument("--variables", help="Nombres de variables separados por coma (con --init)")
    p.add_argument("--bounds", help="Rangos lo..hi separados por coma (con --init)")
    p.add_argument("--strategy", default="pareto", help="Estrategia de adquisición (default: pareto)")
    p.add_argument("--seed", type=int, default=0, help="Semilla (con --init)")
    p.add_argument("--label", type=float, help="Etiqueta del punto pendiente")
    _add_evolution_arguments(p)
    p.set_defaults(handler=cmd_suggest)

    p = sub.add_parser("interactive", help="Ensayo etiquetado por stdin (QUERY/LABEL/ABORT)")
    p.add_argument("--dims", type=int, help="Dimensiones")
    p.add_argument("--variables", help="Nombres de variables separados por coma")
    p.add_argument("--bounds", help="Rangos lo..hi separados por coma")
    p.add_argument("--strategy", default="pareto", help="Estrategia de adquisición (default: pareto)")
    p.add_argument("--seed", type=int, default=0, help="Semilla (default: 0)")
    p.add_argument("--max-points", type=int, default=settings.default_max_points, help="Tope de puntos")
    p.add_argument("--n-jobs", type=int, default=settings.n_jobs, help="Workers de joblib para islas")
    _add_evolution_arguments(p)
    p.set_defaults(handler=cmd_interactive)

    p = sub.add_parser("analyze", help="Correlación entre métricas de diversidad")
    p.add_argument("--dims", type=int, default=3, help="Dimensiones (default: 3)")
    p.add_argument("--bounds", help="Rangos lo..hi separados por coma")
    p.add_argument(
        "--selector",
        default=DiversityKind.MIN_DISTANCE.value,
        choices=[k.value for k in DiversityKind],
        help="Métrica que elige cada punto (default: mindist)",
    )
    p.add_argument("--iterations", type=int, default=100, help="Puntos a seleccionar (default: 100)")
    p.add_argument("--initial", type=int, default=3, help="Puntos uniformes iniciales (default: 3)")
    p.add_argument("--candidates", type=int, default=settings.candidate_points, help="Candidatos por iteración")
    p.add_argument("--seed", type=int, default=0, help="Semilla (default: 0)")
    p.add_argument("--out", default=str(Path(settings.al_output_dir) / "metrics.csv"), help="CSV de métricas")
    p.set_defaults(handler=cmd_analyze)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Punto de entrada; devuelve el código de salida."""
    args = build_parser().parse_args(argv)

    if args.verbose:
        settings.log_level = "DEBUG"
    setup_logging()

    try:
        settings.validate_configuration()
        return args.handler(args)
    except SymbolicRegressionError as e:
        logger.error("Comando fallido", command=args.command, **e.to_dict())
        print(f"❌ {e.message}", file=sys.stderr)
        return e.exit_code
    except PydanticValidationError as e:
        logger.error("Configuración inválida", command=args.command, errors=e.error_count())
        print(f"❌ Configuración inválida: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        logger.warning("Comando interrumpido por el usuario", command=args.command)
        print("\n⚠️  Interrumpido", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error("Error inesperado", command=args.command, error=str(e))
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
