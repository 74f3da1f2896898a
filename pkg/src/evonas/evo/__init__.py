"""Evolutionary engine: individuals, variation/selection operators, strategies."""

from .individual import Individual, Population, make_individual
from .operators import (
    aging_step,
    crossover,
    environmental_select_elitist,
    mutate,
    roulette_select,
    tournament_select,
)
from .pareto import crowding_distance, crowding_select, nondominated_sort
from .strategies import (
    STRATEGIES,
    AgingEvolution,
    GenerationalGA,
    ParetoGA,
    SearchStrategy,
    StrategyConfig,
    build_strategy,
)

__all__ = [
    "AgingEvolution",
    "GenerationalGA",
    "Individual",
    "ParetoGA",
    "Population",
    "STRATEGIES",
    "SearchStrategy",
    "StrategyConfig",
    "aging_step",
    "build_strategy",
    "crossover",
    "crowding_distance",
    "crowding_select",
    "environmental_select_elitist",
    "make_individual",
    "mutate",
    "nondominated_sort",
    "roulette_select",
    "tournament_select",
]
