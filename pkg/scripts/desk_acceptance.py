#!/usr/bin/env python3
"""Aceptación a escala de escritorio: Pareto vs uniforme sobre los problemas de data/problems.txt."""
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.core.logging import setup_logging
from app.core.statistics import mann_whitney
from app.models.al_models import EvolutionParams
from app.services.bench_service import load_problems, run_campaign, select_problems

TRIALS = 25
SEED = 7


def _samples(campaign):
    return [min(p, campaign.max_points) for p in campaign.points_used]


def check_product(pareto, uniform):
    """Ley producto plantada: mediana Pareto <= 10."""
    return [("mediana pareto <= 10", pareto.median <= 10)]


def check_van_der_pol(pareto, uniform):
    """Mediana Pareto en [4, 12] y no peor que la uniforme."""
    return [
        ("mediana pareto en [4, 12]", 4 <= pareto.median <= 12),
        ("mediana pareto <= mediana uniforme", pareto.median <= uniform.median),
    ]


def check_bar_magnet(pareto, uniform):
    """Mediana Pareto estrictamente menor y U de Mann-Whitney en la misma dirección."""
    a, b = _samples(pareto), _samples(uniform)
    u, p = mann_whitney(a, b)
    print(f"   Mann-Whitney pareto vs uniform: U={u:g} p={p:.4g} (informativo)")
    return [
        ("mediana pareto < mediana uniforme", pareto.median < uniform.median),
        ("U de pareto < n1*n2/2", u < len(a) * len(b) / 2.0),
    ]


CHECKS = {
    "product2": check_product,
    "vdp1": check_van_der_pol,
    "barmag1": check_bar_magnet,
}


def main():
    setup_logging()
    params = EvolutionParams()
    problems = select_problems(load_problems("data/problems.txt"), list(CHECKS))
    failed = 0
    for problem in problems:
        campaigns, _ = run_campaign(problem, ["uniform", "pareto"], TRIALS, params, SEED, n_jobs=-1)
        by_strategy = {c.strategy: c for c in campaigns}
        uniform, pareto = by_strategy["uniform"], by_strategy["pareto"]

        print(f"\n🔎 {problem.id}")
        for c in (uniform, pareto):
            print(f"   {c.strategy:<10} mediana={c.median:g}  censurados={c.censored}")
        for name, ok in CHECKS[problem.id](pareto, uniform):
            failed += not ok
            print(f"   {'✅' if ok else '❌'} {name}")

    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
