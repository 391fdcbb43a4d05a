"""Desk-scale ablations on T1: skip versus stabilizer supernets, the all-skip baseline and the accuracy constraint.

Each test trains full supernets on the default 5632-sample task, so the whole
module is marked slow and only runs with --runslow.
"""

import numpy as np
import pytest

from scarlet_kit.data.dataset import DatasetConfig, build_splits
from scarlet_kit.diagnostics.instability import accuracy_spread, instability_report
from scarlet_kit.diagnostics.similarity import layer_similarity
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.evolution.nsga import non_dominated_sort
from scarlet_kit.evolution.search import SearchConfig, evolve
from scarlet_kit.oracle.ground_truth import OracleConfig, exhaustive_ground_truth, ranking_experiment, train_standalone
from scarlet_kit.search_space.spec import identity_genes, load_space
from scarlet_kit.search_space.supernet import build_supernet
from scarlet_kit.training.trainer import OneShotEvaluator, TrainConfig, accuracy_histogram, train_supernet

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


class Desk:
    """Trained supernets, their logs and dataset splits, built once per (seed, els)."""

    def __init__(self):
        self.splits, self.supernets, self.logs = {}, {}, {}

    def data(self, seed):
        if seed not in self.splits:
            self.splits[seed] = build_splits(DatasetConfig(seed=seed))
        return self.splits[seed]

    def __call__(self, seed, els):
        splits = self.data(seed)
        if (seed, els) not in self.supernets:
            spec = load_space("t1").with_stabilizers() if els else load_space("t1")
            config = TrainConfig(epochs=5, batch_size=32, seed=seed, els_enabled=els, val_paths=0)
            supernet = build_supernet(spec, seed, **config.stabilizer_options())
            self.logs[seed, els] = train_supernet(supernet, splits.train, config, progress=False)
            self.supernets[seed, els] = supernet
        return self.supernets[seed, els], splits


@pytest.fixture(scope="module")
def desk():
    return Desk()


def skip_index(spec, layer):
    return next(i for i, choice in enumerate(spec.layers[layer].choices) if choice.is_identity_like)


@pytest.mark.parametrize("seed", SEEDS)
def test_stabilizers_reduce_one_shot_spread(desk, seed):
    spreads = {}
    for els in (False, True):
        supernet, splits = desk(seed, els)
        histogram = accuracy_histogram(supernet, splits.val, 200, Rng(seed).spawn(6))
        spreads[els] = accuracy_spread(histogram.accuracies)
    assert spreads[False].std > spreads[True].std
    assert spreads[False].mass_below > spreads[True].mass_below


def test_skip_is_least_similar_choice(desk):
    rows = {}
    for els in (False, True):
        supernet, splits = desk(0, els)
        matrix = layer_similarity(supernet, 1, splits.val.images[:32])
        rows[els] = matrix.row_means[skip_index(supernet.spec, 1)]
        if not els:
            others = np.delete(matrix.row_means, skip_index(supernet.spec, 1))
            assert rows[els] < others.min()
    assert rows[True] > rows[False]


def test_stabilizers_steady_training_accuracy(desk):
    std_skip, std_els = [], []
    for seed in SEEDS:
        for els in (False, True):
            desk(seed, els)
        summary = instability_report(desk.logs[seed, False], desk.logs[seed, True]).summary()
        std_skip.append(summary["mean_std_a"])
        std_els.append(summary["mean_std_b"])
    assert np.mean(std_els) < np.mean(std_skip)


@pytest.mark.parametrize("seed", SEEDS)
def test_all_skip_model_beats_chance(desk, seed):
    t1 = load_space("t1")
    result = train_standalone(t1, identity_genes(t1), desk.data(seed), OracleConfig(epochs=30, seed=seed))
    assert result.test_accuracy > 0.25


@pytest.mark.parametrize("seed", SEEDS)
def test_stabilizers_improve_ranking(desk, seed):
    skip_net, splits = desk(seed, False)
    els_net, _ = desk(seed, True)
    truth = exhaustive_ground_truth(skip_net.spec, splits, OracleConfig(epochs=30, seed=seed), workers=4, progress=False)
    taus = {
        els: ranking_experiment(OneShotEvaluator(net, splits.val), truth, len(truth), Rng(seed).spawn(5)).tau
        for els, net in ((False, skip_net), (True, els_net))
    }
    assert taus[True] - taus[False] >= 0.1


def test_accuracy_constraint_prunes_shallow_models(desk):
    supernet, splits = desk(0, True)
    evaluator = OneShotEvaluator(supernet, splits.val)
    results = {
        acc_min: evolve(supernet, supernet.spec, splits.val, SearchConfig(population=32, generations=20, acc_min=acc_min),
                        evaluator=evaluator, progress=False)
        for acc_min in (0.0, 0.4)
    }

    def mean_skips(population):
        return np.mean([sum(1 for c in ind.arch.choices(supernet.spec) if c.is_identity_like) for ind in population])

    assert mean_skips(results[0.4].population) < mean_skips(results[0.0].population)
    first_front = non_dominated_sort(results[0.0].population)[0]
    assert identity_genes(supernet.spec) in [ind.arch for ind in first_front]
