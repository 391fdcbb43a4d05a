"""Non-dominated sorting and weighted crowding distance.

Objective senses: accuracy and parameter count are maximized, multiply-adds
minimized. Internally every objective is oriented so that larger is better.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from scarlet_kit.errors import InputError
from scarlet_kit.search_space.spec import Architecture

OBJECTIVES = ("acc", "madds", "params")


@dataclass(frozen=True)
class ObjectiveVector:
    acc: float
    madds: int
    params: int

    def __post_init__(self):
        if not math.isfinite(self.acc) or self.madds < 0 or self.params < 0:
            raise InputError(f"objectives must be finite with non-negative costs, got {self}")

    def oriented(self) -> Tuple[float, float, float]:
        return self.acc, -float(self.madds), float(self.params)


@dataclass
class Individual:
    arch: Architecture
    objectives: ObjectiveVector
    rank: int = 0
    crowding: float = 0.0

    @property
    def genes(self) -> Tuple[int, ...]:
        return self.arch.genes


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """a is no worse than b everywhere and strictly better somewhere."""
    oa, ob = a.oriented(), b.oriented()
    return all(x >= y for x, y in zip(oa, ob)) and any(x > y for x, y in zip(oa, ob))


def non_dominated_sort(population: Sequence[Individual]) -> List[List[Individual]]:
    """Fast non-dominated sort; sets `rank` (0 for the first front) on every individual."""
    size = len(population)
    dominated_by = [[] for _ in range(size)]
    counts = [0] * size
    fronts = [[]]
    for p in range(size):
        for q in range(size):
            if p == q:
                continue
            if dominates(population[p].objectives, population[q].objectives):
                dominated_by[p].append(q)
            elif dominates(population[q].objectives, population[p].objectives):
                counts[p] += 1
        if counts[p] == 0:
            population[p].rank = 0
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    population[q].rank = i + 1
                    nxt.append(q)
        i += 1
        fronts.append(sorted(nxt))
    return [[population[idx] for idx in front] for front in fronts if front]


def weighted_crowding(front: Sequence[Individual], weights: Sequence[float]) -> List[float]:
    """Per objective k: boundaries get +inf, interior points w_k * normalized neighbour gap; summed.

    Every objective marks its extremes as boundary; one with zero weight or zero
    range adds no interior distance. Fronts of one or two individuals are all
    boundary. Results are also stored on `crowding`.
    """
    size = len(front)
    if size <= 2:
        distances = [math.inf] * size
    else:
        distances = [0.0] * size
        for k, weight in enumerate(weights):
            values = [ind.objectives.oriented()[k] for ind in front]
            order = sorted(range(size), key=lambda i: values[i])
            distances[order[0]] = distances[order[-1]] = math.inf
            span = values[order[-1]] - values[order[0]]
            if weight <= 0 or span == 0:
                continue
            for pos in range(1, size - 1):
                gap = values[order[pos + 1]] - values[order[pos - 1]]
                distances[order[pos]] += weight * gap / span
    for ind, distance in zip(front, distances):
        ind.crowding = distance
    return distances


def crowded_better(a: Individual, b: Individual) -> bool:
    """Crowded-comparison operator: lower rank wins, then larger crowding distance."""
    return a.rank < b.rank or (a.rank == b.rank and a.crowding > b.crowding)
