"""Constrained, weighted NSGA-II architecture search."""

from scarlet_kit.evolution.nsga import Individual, ObjectiveVector, dominates, non_dominated_sort, weighted_crowding
from scarlet_kit.evolution.operators import crossover, hierarchical_mutation, make_offspring, tournament_select
from scarlet_kit.evolution.search import (
    ParetoArchive,
    SearchConfig,
    SearchResult,
    evolve,
    is_feasible,
    objective_costs,
    select_equispaced,
    write_search_outputs,
)
