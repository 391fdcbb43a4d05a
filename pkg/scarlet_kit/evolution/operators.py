"""Tournament selection, uniform crossover and hierarchical mutation."""

from typing import List, Sequence, Tuple

import numpy as np

from scarlet_kit.engine.tensor import Rng
from scarlet_kit.evolution.nsga import Individual, crowded_better
from scarlet_kit.search_space.spec import Architecture, LayerSpec, SpaceSpec

MUTATION_MODES = ("resample", "expansion", "kernel_or_prune")


def tournament_select(population: Sequence[Individual], rng: Rng) -> Individual:
    """Binary tournament under the crowded-comparison operator; ties keep the first draw."""
    a = population[int(rng.integers(len(population)))]
    b = population[int(rng.integers(len(population)))]
    return b if crowded_better(b, a) else a


def crossover(a: Architecture, b: Architecture, rng: Rng) -> Architecture:
    """Uniform per-gene crossover."""
    mask = rng.uniform(size=len(a)) < 0.5
    return Architecture(tuple(int(x) if take_a else int(y) for x, y, take_a in zip(a.genes, b.genes, mask)))


def _alternatives(layer: LayerSpec, gene: int, mode: str) -> List[int]:
    current = layer.choices[gene]
    if mode == "resample":
        return [i for i in range(len(layer.choices)) if i != gene]
    if current.kind != "ib":
        # identity-like genes only move by resampling
        return []
    if mode == "expansion":
        return [
            i for i, c in enumerate(layer.choices)
            if c.kind == "ib" and c.kernel == current.kernel and c.se == current.se and c.expansion != current.expansion
        ]
    return [
        i for i, c in enumerate(layer.choices)
        if c.is_identity_like
        or (c.kind == "ib" and c.expansion == current.expansion and c.se == current.se and c.kernel != current.kernel)
    ]


def hierarchical_mutation(arch: Architecture, spec: SpaceSpec, rng: Rng, mutation_ratio: float,
                          mode_weights: Tuple[float, float, float]) -> Architecture:
    """Each layer is picked with prob `mutation_ratio`; a picked layer applies one mode drawn by `mode_weights`.

    Modes: resample to a different choice; re-draw the expansion keeping the
    kernel; re-draw the kernel keeping the expansion, or prune to the
    skip/ELS choice. A mode with no alternative leaves the gene unchanged.
    """
    total = float(sum(mode_weights))
    probs = np.asarray(mode_weights, dtype=np.float64) / total if total > 0 else None
    genes = list(arch.genes)
    for index, layer in enumerate(spec.layers):
        if rng.random() >= mutation_ratio or probs is None:
            continue
        mode = MUTATION_MODES[rng.choice(len(MUTATION_MODES), p=probs)]
        options = _alternatives(layer, genes[index], mode)
        if options:
            genes[index] = options[int(rng.integers(len(options)))]
    return Architecture(tuple(genes))


def make_offspring(parents: Tuple[Architecture, Architecture], spec: SpaceSpec, config, rng: Rng) -> Architecture:
    """Crossover with prob p_km, otherwise mutate the first parent with prob p_m (else copy it)."""
    first, second = parents
    if rng.random() < config.p_km:
        return crossover(first, second, rng)
    if rng.random() < config.p_m:
        return hierarchical_mutation(first, spec, rng, config.mutation_ratio, (config.p_rm, config.p_re, config.p_pr))
    return first
