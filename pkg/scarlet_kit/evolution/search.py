"""Constrained, weighted NSGA-II over a trained supernet.

Every candidate passes the cheap multiply-adds check before it is evaluated;
only then is its one-shot accuracy measured and the accuracy floor applied.
Offspring accuracies can be computed on worker threads, but results are
committed in candidate order, so the outcome does not depend on the worker
count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from scarlet_kit.config import SHOW_PROGRESS
from scarlet_kit.data.dataset import Dataset, require_split
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import ConfigError, InputError
from scarlet_kit.evolution.nsga import (
    Individual,
    ObjectiveVector,
    dominates,
    non_dominated_sort,
    weighted_crowding,
)
from scarlet_kit.evolution.operators import make_offspring, tournament_select
from scarlet_kit.search_space.costs import count_madds, count_params
from scarlet_kit.search_space.sampling import sample_uniform
from scarlet_kit.search_space.spec import Architecture, SpaceSpec, format_architecture, max_cost_genes
from scarlet_kit.search_space.supernet import Supernet
from scarlet_kit.training.trainer import OneShotEvaluator

logger = logging.getLogger(__name__)

Evaluator = Callable[[Architecture], float]


class SearchConfig(BaseModel):
    population: int = Field(default=8, ge=2)
    generations: int = Field(default=2, ge=0)
    w_acc: float = Field(default=0.4, ge=0)
    w_madds: float = Field(default=0.4, ge=0)
    w_params: float = Field(default=0.2, ge=0)
    # absolute budget; when unset, madds_max_fraction of the all-max architecture
    madds_max: Optional[int] = Field(default=None, gt=0)
    madds_max_fraction: float = Field(default=0.6, gt=0)
    acc_min: float = Field(default=0.4, ge=0, le=1)
    mutation_ratio: float = Field(default=0.8, ge=0, le=1)
    p_rm: float = Field(default=0.2, ge=0)
    p_re: float = Field(default=0.65, ge=0)
    p_pr: float = Field(default=0.15, ge=0)
    p_m: float = Field(default=0.7, ge=0, le=1)
    p_km: float = Field(default=0.3, ge=0, le=1)
    init_draw_budget: int = Field(default=5000, ge=1)
    offspring_draw_budget: int = Field(default=5000, ge=1)
    select_k: int = Field(default=3, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _weights_sum_to_one(self):
        total = self.w_acc + self.w_madds + self.w_params
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"objective weights must sum to 1, got {total}")
        return self

    @property
    def weights(self) -> Tuple[float, float, float]:
        return self.w_acc, self.w_madds, self.w_params

    def resolve_madds_max(self, spec: SpaceSpec) -> int:
        if self.madds_max is not None:
            return self.madds_max
        return int(self.madds_max_fraction * count_madds(spec, max_cost_genes(spec), folded=True))


def objective_costs(spec: SpaceSpec, arch: Architecture) -> Tuple[int, int]:
    """(madds, params) of the network that is deployed, i.e. with stabilizers folded away."""
    return count_madds(spec, arch, folded=True), count_params(spec, arch, folded=True)


def is_feasible(objectives: ObjectiveVector, madds_max: int, acc_min: float) -> bool:
    return objectives.madds <= madds_max and objectives.acc >= acc_min


@dataclass
class ParetoArchive:
    """Non-dominated set of every feasible individual evaluated, plus the best-accuracy record."""

    members: List[Individual] = field(default_factory=list)
    best: Optional[Individual] = None

    def add(self, ind: Individual) -> None:
        if self.best is None or ind.objectives.acc > self.best.objectives.acc:
            self.best = ind
        if any(m.genes == ind.genes or dominates(m.objectives, ind.objectives) for m in self.members):
            return
        self.members = [m for m in self.members if not dominates(ind.objectives, m.objectives)] + [ind]


@dataclass
class SearchResult:
    population: List[Individual]
    front: List[Individual]
    archive: ParetoArchive
    generations: pd.DataFrame
    audit: List[dict]
    madds_max: int


class _Search:
    """State of one evolve() run."""

    def __init__(self, spec: SpaceSpec, evaluate: Evaluator, config: SearchConfig, workers: int):
        self.spec, self.evaluate, self.config, self.workers = spec, evaluate, config, max(1, workers)
        self.madds_max = config.resolve_madds_max(spec)
        self.rng = Rng(config.seed)
        self.archive = ParetoArchive()
        self.audit: List[dict] = []
        self.cache: Dict[Tuple[int, ...], float] = {}
        self.generation = -1

    def _accuracies(self, archs: Sequence[Architecture]) -> List[float]:
        pending = [a for a in dict.fromkeys(archs) if a.genes not in self.cache]
        if self.workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                results = list(executor.map(self.evaluate, pending))
        else:
            results = [self.evaluate(a) for a in pending]
        for arch, acc in zip(pending, results):
            self.cache[arch.genes] = float(acc)
        for arch in archs:
            self.audit.append({"generation": self.generation, "event": "evaluate", "genes": str(arch),
                               "value": self.cache[arch.genes]})
        return [self.cache[a.genes] for a in archs]

    def _within_budget(self, arch: Architecture) -> Optional[Tuple[int, int]]:
        madds, params = objective_costs(self.spec, arch)
        passed = madds <= self.madds_max
        self.audit.append({"generation": self.generation, "event": "madds_check", "genes": str(arch),
                           "value": madds, "passed": passed})
        return (madds, params) if passed else None

    def _fill(self, needed: int, propose: Callable[[], Architecture], budget: int, what: str) -> List[Individual]:
        """Draw candidates until `needed` of them satisfy both constraints."""
        accepted: List[Individual] = []
        draws = 0
        while len(accepted) < needed:
            batch: List[Tuple[Architecture, Tuple[int, int]]] = []
            while len(batch) < needed - len(accepted):
                if draws >= budget:
                    raise ConfigError(
                        f"constraints too tight: only {len(accepted)}/{needed} feasible {what} after {budget} draws "
                        f"(madds_max={self.madds_max}, acc_min={self.config.acc_min})"
                    )
                draws += 1
                arch = propose()
                costs = self._within_budget(arch)
                if costs is not None:
                    batch.append((arch, costs))
            accs = self._accuracies([arch for arch, _ in batch])
            for (arch, (madds, params)), acc in zip(batch, accs):
                ind = Individual(arch, ObjectiveVector(acc, madds, params))
                if ind.objectives.acc >= self.config.acc_min:
                    self.archive.add(ind)
                    accepted.append(ind)
                    if len(accepted) == needed:
                        break
        return accepted

    def _truncate(self, merged: List[Individual]) -> List[Individual]:
        survivors: List[Individual] = []
        for front in non_dominated_sort(merged):
            weighted_crowding(front, self.config.weights)
            if len(survivors) + len(front) <= self.config.population:
                survivors.extend(front)
                continue
            ranked = sorted(front, key=lambda ind: -ind.crowding)
            survivors.extend(ranked[:self.config.population - len(survivors)])
            break
        return survivors

    def _offspring(self, parents: List[Individual]) -> List[Individual]:
        def propose():
            pair = (tournament_select(parents, self.rng).arch, tournament_select(parents, self.rng).arch)
            return make_offspring(pair, self.spec, self.config, self.rng)

        return self._fill(self.config.population, propose, self.config.offspring_draw_budget, "offspring")

    def _stats(self, population: List[Individual]) -> dict:
        identity = [
            [c.is_identity_like for c in ind.arch.choices(self.spec)] for ind in population
        ]
        return {
            "generation": self.generation,
            "best_acc": max(ind.objectives.acc for ind in population),
            "mean_acc": float(np.mean([ind.objectives.acc for ind in population])),
            "mean_madds": float(np.mean([ind.objectives.madds for ind in population])),
            "skip_ratio": float(np.mean(identity)),
            "front_size": sum(1 for ind in population if ind.rank == 0),
        }

    def run(self, progress: bool) -> SearchResult:
        n = self.config.population
        def uniform():
            return sample_uniform(self.spec, self.rng)

        parents = self._fill(n, uniform, self.config.init_draw_budget, "initial individuals")
        children = self._fill(n, uniform, self.config.init_draw_budget, "initial individuals")
        rows = []
        for generation in tqdm(range(self.config.generations), desc="generations", disable=not progress):
            self.generation = generation
            parents = self._truncate(parents + children)
            rows.append(self._stats(parents))
            logger.info(
                f"📊 Generation {generation + 1}/{self.config.generations}: best acc {rows[-1]['best_acc']:.4f}, "
                f"skip ratio {rows[-1]['skip_ratio']:.3f}"
            )
            children = self._offspring(parents)
        self.generation = self.config.generations
        final = self._truncate(parents + children)
        rows.append(self._stats(final))
        front = [ind for ind in final if ind.rank == 0]
        return SearchResult(final, front, self.archive, pd.DataFrame(rows), self.audit, self.madds_max)


def evolve(supernet: Optional[Supernet], spec: SpaceSpec, valset: Optional[Dataset], config: SearchConfig,
           workers: int = 1, evaluator: Optional[Evaluator] = None, progress: bool = SHOW_PROGRESS) -> SearchResult:
    """Run the constrained weighted NSGA-II loop.

    Accuracy comes from one-shot evaluation of `supernet` on `valset` unless an
    `evaluator` (any arch -> accuracy callable, e.g. a ground-truth lookup) is given.
    """
    if evaluator is None:
        if supernet is None or valset is None:
            raise InputError("evolve needs a supernet and a validation set, or an explicit evaluator")
        require_split(valset, "val")
        evaluator = OneShotEvaluator(supernet, valset)
    logger.info(
        f"🚀 Searching {spec.name!r}: population {config.population}, {config.generations} generations, "
        f"weights {config.weights}, acc_min {config.acc_min}"
    )
    result = _Search(spec, evaluator, config, workers).run(progress)
    logger.info(
        f"✅ Search finished: {len(result.front)} on the final front, {len(result.archive.members)} in the archive"
    )
    return result


def select_equispaced(front: Sequence[Individual], k: int) -> List[Architecture]:
    """k members spread evenly along the front ordered by multiply-adds; k=1 gives the cheapest."""
    if k < 1 or k > len(front):
        raise InputError(f"cannot select {k} models from a front of {len(front)}")
    ordered = sorted(front, key=lambda ind: (ind.objectives.madds, ind.genes))
    if k == 1:
        return [ordered[0].arch]
    positions = [int(np.floor(i * (len(ordered) - 1) / (k - 1) + 0.5)) for i in range(k)]
    return [ordered[p].arch for p in positions]


def individuals_frame(individuals: Sequence[Individual]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "genes": format_architecture(ind.arch),
                "acc": ind.objectives.acc,
                "madds": ind.objectives.madds,
                "params": ind.objectives.params,
            }
            for ind in individuals
        ],
        columns=["genes", "acc", "madds", "params"],
    )


def write_search_outputs(result: SearchResult, out_dir, k: int) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "generations": out_dir / "generations.csv",
        "front": out_dir / "pareto_front.csv",
        "archive": out_dir / "archive.csv",
        "audit": out_dir / "evaluation_audit.csv",
        "selected": out_dir / "selected_archs.txt",
    }
    result.generations.to_csv(paths["generations"], index=False)
    individuals_frame(sorted(result.front, key=lambda i: (i.objectives.madds, i.genes))).to_csv(paths["front"], index=False)
    individuals_frame(sorted(result.archive.members, key=lambda i: (i.objectives.madds, i.genes))).to_csv(
        paths["archive"], index=False
    )
    pd.DataFrame(result.audit, columns=["generation", "event", "genes", "value", "passed"]).to_csv(
        paths["audit"], index=False
    )
    selected = select_equispaced(result.front, min(k, len(result.front)))
    paths["selected"].write_text("".join(f"{format_architecture(a)}\n" for a in selected), encoding="utf-8")
    return paths
