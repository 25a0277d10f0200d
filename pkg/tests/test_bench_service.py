"""Tests del servicio de benchmark: problemas, campañas, comparaciones y artefactos."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from app.core.exceptions import ConfigurationError, ProblemFileError, ValidationError
from app.core.statistics import mann_whitney
from app.models.al_models import EvolutionParams, RunConfig, TrialResult
from app.services.acquisition_service import MetricRecord
from app.services.bench_service import (
    _format,
    aggregate,
    compare_campaigns,
    compare_files,
    compare_samples,
    load_problems,
    parse_problem_line,
    read_trials_csv,
    run_benchmark,
    run_campaign,
    select_problems,
    summarize_metric_records,
    trial_seed,
    write_artifacts,
    write_metric_table,
)

REPO_ROOT = Path(__file__).resolve().parent.parent


def _write_trials(path, problem, strategy, points):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["problem", "strategy", "trial", "seed", "points_used", "solved"])
        for i, p in enumerate(points):
            writer.writerow([problem, strategy, i, i, p, "true"])
    return str(path)


# --------------------------------------------------------------------------- #
# Archivo de problemas
# --------------------------------------------------------------------------- #

def test_parse_line_with_indices_and_bounds():
    problem = parse_problem_line("vdp1 | 10*(y-(1/3)*(x^3-x)) | 1:y=-5..5, 0:x=-5..5 | 500")
    assert problem.variables == ["x", "y"]
    assert problem.bounds == [(-5.0, 5.0), (-5.0, 5.0)]
    assert problem.max_points == 500
    assert problem.oracle.evaluate([0.0, 1.0]) == pytest.approx(10.0)


def test_parse_line_defaults():
    problem = parse_problem_line("p | x*y | x, y")
    assert problem.bounds == [(1.0, 5.0), (1.0, 5.0)]
    assert problem.max_points == 1000


@pytest.mark.parametrize(
    "line",
    [
        "p | x",
        "p | x | x=5..1",
        "p | x | x=a..b",
        "p | x + z | x",
        "p | x + | x",
        "p |  | x",
        "p | x | 0:x, 0:y",
        "p | x | x | dos",
        "p | x | x | 2",
    ],
)
def test_invalid_lines(line):
    with pytest.raises(ProblemFileError) as exc:
        parse_problem_line(line, "problems.txt", 7)
    assert exc.value.exit_code == 2
    assert exc.value.details["line"] == 7


def test_load_problems_skips_comments(problems_file):
    problems = load_problems(str(problems_file))
    assert [p.id for p in problems] == ["identity", "product2"]


def test_load_problems_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "dup.txt"
    path.write_text("a | x | x\na | x | x\n", encoding="utf-8")
    with pytest.raises(ProblemFileError) as exc:
        load_problems(str(path))
    assert exc.value.details["line"] == 2


def test_load_missing_file(tmp_path):
    with pytest.raises(ProblemFileError):
        load_problems(str(tmp_path / "no-existe.txt"))


def test_bundled_problems_load():
    problems = {p.id: p for p in load_problems(str(REPO_ROOT / "data" / "problems.txt"))}
    assert problems["barmag1"].oracle.evaluate([0.0, 0.0]) == 0.0
    assert problems["vdp1"].oracle.evaluate([0.0, 1.0]) == pytest.approx(10.0)


def test_select_unknown_problem(problems_file):
    with pytest.raises(ConfigurationError):
        select_problems(load_problems(str(problems_file)), ["vdp9"])


# --------------------------------------------------------------------------- #
# Campañas
# --------------------------------------------------------------------------- #

def test_trial_seeds_are_paired_and_distinct():
    assert trial_seed(7, 0) == trial_seed(7, 0)
    assert len({trial_seed(7, t) for t in range(25)}) == 25
    assert trial_seed(7, 0) != trial_seed(8, 0)


def test_all_censored_campaign(identity_problem):
    trials = [
        TrialResult(problem_id="identity", strategy="uniform", trial=t, points_used=20, solved=False)
        for t in range(4)
    ]
    campaign = aggregate(identity_problem, "uniform", trials)
    assert campaign.median == 20.0
    assert campaign.censored == 4


def test_aborted_trials_are_excluded(identity_problem):
    trials = [
        TrialResult(problem_id="identity", strategy="uniform", points_used=3, solved=True),
        TrialResult(problem_id="identity", strategy="uniform", points_used=2, solved=False, aborted=True),
    ]
    campaign = aggregate(identity_problem, "uniform", trials)
    assert campaign.points_used == [3]
    assert campaign.aborted == 1


def test_trivial_problem_is_solved_with_initial_points(identity_problem, small_params):
    campaigns, trials = run_campaign(identity_problem, ["uniform"], 1, small_params, 0, n_jobs=1)
    assert campaigns[0].median == 3.0
    assert trials[0].solved


def test_zero_trials_is_rejected(identity_problem, small_params):
    with pytest.raises(ConfigurationError):
        run_campaign(identity_problem, ["uniform"], 0, small_params, 0)


def test_unknown_strategy_is_rejected(identity_problem, small_params):
    with pytest.raises(ConfigurationError) as exc:
        run_campaign(identity_problem, ["oracle"], 1, small_params, 0)
    assert "uniform" in exc.value.message


# --------------------------------------------------------------------------- #
# Comparaciones
# --------------------------------------------------------------------------- #

def test_separated_samples_outperform():
    result = compare_samples("p", "pareto", "uniform", [4, 5, 5, 6, 4, 5, 6, 4], [20, 25, 30, 22, 27, 24, 21, 26])
    assert result.outcome == "outperform"
    assert result.significant


def test_uniform_is_always_the_baseline(identity_problem):
    def campaign(strategy, points):
        trials = [TrialResult(problem_id="identity", strategy=strategy, points_used=p, solved=True) for p in points]
        return aggregate(identity_problem, strategy, trials)

    comparisons = compare_campaigns([campaign("uniform", [5, 6, 7]), campaign("pareto", [3, 3, 4])])
    assert len(comparisons) == 1
    assert comparisons[0].strategy == "pareto"
    assert comparisons[0].baseline == "uniform"


def test_identical_files_are_not_significant(tmp_path):
    a = _write_trials(tmp_path / "a.csv", "vdp1", "pareto", [7, 9, 8, 12, 7])
    result = compare_files(a, a)
    assert result.p_value == 1.0
    assert not result.significant


def test_disjoint_files_are_significant(tmp_path):
    a = _write_trials(tmp_path / "a.csv", "vdp1", "pareto", list(range(3, 28)))
    b = _write_trials(tmp_path / "b.csv", "vdp1", "uniform", list(range(40, 65)))
    result = compare_files(a, b)
    assert result.significant
    assert result.outcome == "outperform"


def test_files_of_different_problems(tmp_path):
    a = _write_trials(tmp_path / "a.csv", "vdp1", "pareto", [3, 4])
    b = _write_trials(tmp_path / "b.csv", "barmag1", "pareto", [3, 4])
    with pytest.raises(ConfigurationError):
        compare_files(a, b)


def test_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("problem,strategy\nvdp1,pareto\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        read_trials_csv(str(path))


def test_strategy_filter_on_mixed_file(tmp_path):
    path = tmp_path / "mixed.csv"
    _write_trials(path, "vdp1", "pareto", [3, 4])
    with open(path, "a", encoding="utf-8", newline="") as handle:
        handle.write("vdp1,uniform,0,0,9,true\n")
    with pytest.raises(ConfigurationError):
        read_trials_csv(str(path))
    assert read_trials_csv(str(path), "uniform") == ("vdp1", "uniform", [9])


# --------------------------------------------------------------------------- #
# Artefactos
# --------------------------------------------------------------------------- #

def test_format_of_whole_floats_and_booleans():
    assert _format(3.0) == "3"
    assert _format(2.5) == "2.5"
    assert _format(True) == "true"
    assert _format(None) == ""


def test_artifacts_are_written(identity_problem, small_params, tmp_path):
    campaigns, trials = run_campaign(identity_problem, ["uniform", "diversity:mindist"], 2, small_params, 3, n_jobs=1)
    paths = write_artifacts(str(tmp_path), campaigns, trials, compare_campaigns(campaigns))

    with open(paths["trials"], encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert {r["strategy"] for r in rows} == {"uniform", "diversity:mindist"}
    # ensayos pareados: misma semilla para el mismo índice
    seeds = {(r["strategy"], r["trial"]): r["seed"] for r in rows}
    assert seeds[("uniform", "0")] == seeds[("diversity:mindist", "0")]

    with open(paths["summary"], encoding="utf-8") as handle:
        summary = {r["strategy"]: r for r in csv.DictReader(handle)}
    assert summary["uniform"]["p_vs_uniform"] == ""
    assert summary["diversity:mindist"]["p_vs_uniform"] != ""

    lines = Path(paths["iterations"]).read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    assert json.loads(lines[0])["problem_id"] == "identity"


def test_benchmark_artifacts_are_deterministic(problems_file, small_params, tmp_path):
    def run(out):
        config = RunConfig(
            problems_file=str(problems_file),
            problem_ids=["identity"],
            strategies=["uniform"],
            trials=2,
            master_seed=11,
            evolution=small_params,
            output_dir=str(out),
        )
        return run_benchmark(config)[2]

    first, second = run(tmp_path / "a"), run(tmp_path / "b")
    for name in first:
        assert Path(first[name]).read_bytes() == Path(second[name]).read_bytes()


def test_run_config_rejects_zero_trials(problems_file):
    with pytest.raises(ValueError):
        RunConfig(problems_file=str(problems_file), trials=0)


# --------------------------------------------------------------------------- #
# Análisis de métricas
# --------------------------------------------------------------------------- #

def test_metric_summary_of_linear_columns():
    records = [MetricRecord(i, float(i), 2.0 * i + 1.0, float(-i)) for i in range(6)]
    summary = {(r["metric_a"], r["metric_b"]): r for r in summarize_metric_records(records)}
    assert summary[("min_distance", "mean_distance")]["pearson_r2"] == pytest.approx(1.0)
    assert summary[("min_distance", "joint_correlation")]["spearman_rho"] == pytest.approx(-1.0)


def test_metric_summary_skips_missing_correlation():
    records = [MetricRecord(i, float(i), float(i * i), None) for i in range(5)]
    pairs = [(r["metric_a"], r["metric_b"]) for r in summarize_metric_records(records)]
    assert pairs == [("min_distance", "mean_distance")]


def test_metric_summary_with_constant_column():
    records = [MetricRecord(i, 0.0, float(i), None) for i in range(5)]
    row = summarize_metric_records(records)[0]
    assert row["pearson_r2"] is None


def test_metric_table(tmp_path):
    records = [MetricRecord(0, 1.0, 2.0, None), MetricRecord(1, 0.5, 1.5, None)]
    path = write_metric_table(str(tmp_path / "m" / "metrics.csv"), records)
    assert path.read_text(encoding="utf-8").splitlines() == [
        "iteration,min_distance,mean_distance,joint_correlation",
        "0,1,2,",
        "1,0.5,1.5,",
    ]


# --------------------------------------------------------------------------- #
# Aceptación sobre los problemas incluidos (25 ensayos, parámetros por defecto)
# --------------------------------------------------------------------------- #

def _bundled_campaigns(problem_id):
    problems = select_problems(load_problems(str(REPO_ROOT / "data" / "problems.txt")), [problem_id])
    campaigns, _ = run_campaign(problems[0], ["uniform", "pareto"], 25, EvolutionParams(), 7, n_jobs=-1)
    return {c.strategy: c for c in campaigns}


@pytest.mark.slow
def test_van_der_pol_acceptance():
    by_strategy = _bundled_campaigns("vdp1")
    pareto, uniform = by_strategy["pareto"], by_strategy["uniform"]
    assert 4 <= pareto.median <= 12
    assert pareto.median <= uniform.median


@pytest.mark.slow
def test_bar_magnet_acceptance():
    by_strategy = _bundled_campaigns("barmag1")
    pareto, uniform = by_strategy["pareto"], by_strategy["uniform"]
    assert pareto.median < uniform.median
    a = [min(p, pareto.max_points) for p in pareto.points_used]
    b = [min(p, uniform.max_points) for p in uniform.points_used]
    u, _ = mann_whitney(a, b)
    assert u < len(a) * len(b) / 2.0


@pytest.mark.slow
def test_product_acceptance():
    assert _bundled_campaigns("product2")["pareto"].median <= 10
