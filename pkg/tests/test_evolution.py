import math

import pytest
from pydantic import ValidationError

from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import ConfigError, InputError
from scarlet_kit.evolution.nsga import (
    Individual,
    ObjectiveVector,
    dominates,
    non_dominated_sort,
    weighted_crowding,
)
from scarlet_kit.evolution.operators import crossover, hierarchical_mutation, make_offspring
from scarlet_kit.evolution.search import (
    ParetoArchive,
    SearchConfig,
    evolve,
    individuals_frame,
    is_feasible,
    objective_costs,
    select_equispaced,
    write_search_outputs,
)
from scarlet_kit.search_space.spec import Architecture, identity_genes, max_cost_genes, parse_architecture
from scarlet_kit.search_space.supernet import build_supernet


def individual(acc, madds, params, genes=(0,)):
    return Individual(Architecture(genes), ObjectiveVector(acc, madds, params))


def depth_evaluator(spec):
    """Accuracy grows with the number of non-identity blocks: 0.3 for all-skip up to 0.9."""
    def evaluate(arch):
        blocks = sum(1 for c in arch.choices(spec) if not c.is_identity_like)
        return 0.3 + 0.15 * blocks
    return evaluate


class CountingEvaluator:
    def __init__(self, evaluate):
        self.evaluate, self.calls = evaluate, []

    def __call__(self, arch):
        self.calls.append(arch.genes)
        return self.evaluate(arch)


def brute_force_fronts(objectives):
    remaining, fronts = list(range(len(objectives))), []
    while remaining:
        front = [i for i in remaining if not any(dominates(objectives[j], objectives[i]) for j in remaining if j != i)]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


class TestDominance:
    def test_better_everywhere(self):
        a, b = ObjectiveVector(0.7, 100, 3_000_000), ObjectiveVector(0.6, 120, 2_000_000)
        assert dominates(a, b) and not dominates(b, a)

    def test_not_strict_on_self(self):
        a = ObjectiveVector(0.7, 100, 3_000_000)
        assert not dominates(a, a)

    def test_mixed(self):
        a, b = ObjectiveVector(0.7, 100, 3_000_000), ObjectiveVector(0.8, 90, 4_000_000)
        assert not dominates(a, b) and dominates(b, a)

    def test_trade_off(self):
        a, b = ObjectiveVector(0.7, 100, 1), ObjectiveVector(0.8, 200, 1)
        assert not dominates(a, b) and not dominates(b, a)

    def test_invalid_objectives(self):
        with pytest.raises(InputError):
            ObjectiveVector(math.nan, 1, 1)
        with pytest.raises(InputError):
            ObjectiveVector(0.5, -1, 1)


class TestNonDominatedSort:
    def test_single(self):
        fronts = non_dominated_sort([individual(0.5, 10, 10)])
        assert len(fronts) == 1 and len(fronts[0]) == 1

    def test_mutually_non_dominating(self):
        population = [individual(0.5, 10, 10), individual(0.6, 20, 10), individual(0.7, 30, 10)]
        fronts = non_dominated_sort(population)
        assert [len(f) for f in fronts] == [3]
        assert all(ind.rank == 0 for ind in population)

    def test_matches_peeling(self):
        rng = Rng(0)
        for _ in range(20):
            population = [
                individual(float(rng.integers(5)) / 4, int(rng.integers(5)), int(rng.integers(5)), (i,))
                for i in range(15)
            ]
            fronts = non_dominated_sort(population)
            expected = brute_force_fronts([ind.objectives for ind in population])
            assert [sorted(ind.genes[0] for ind in f) for f in fronts] == expected
            for rank, front in enumerate(fronts):
                assert all(ind.rank == rank for ind in front)


class TestWeightedCrowding:
    def test_small_fronts_are_boundary(self):
        assert weighted_crowding([individual(0.5, 1, 1)], (0.4, 0.4, 0.2)) == [math.inf]
        assert weighted_crowding([individual(0.5, 1, 1), individual(0.6, 2, 1)], (0.4, 0.4, 0.2)) == [math.inf] * 2

    def test_collinear_single_objective(self):
        front = [individual(0.0, 5, 5), individual(0.5, 5, 5), individual(1.0, 5, 5)]
        distances = weighted_crowding(front, (1.0, 0.0, 0.0))
        assert distances == [math.inf, 1.0, math.inf]
        assert front[1].crowding == 1.0

    def test_zero_weight_adds_no_interior_distance(self):
        front = [individual(0.5, 10, 5), individual(0.5, 20, 5), individual(0.5, 40, 5)]
        assert weighted_crowding(front, (1.0, 0.0, 0.0)) == [math.inf, 0.0, math.inf]

    def test_zero_weight_objective_still_marks_boundaries(self):
        # accuracy extremes are the first and last, multiply-add extremes the middle two
        front = [individual(0.1, 20, 5), individual(0.4, 40, 5), individual(0.6, 10, 5), individual(0.9, 30, 5)]
        assert weighted_crowding(front, (1.0, 0.0, 0.0)) == [math.inf] * 4
        assert weighted_crowding(front, (0.0, 1.0, 0.0)) == [math.inf] * 4

    def test_scale_invariant(self):
        base = [individual(0.1, 10, 3), individual(0.4, 25, 7), individual(0.5, 30, 8), individual(0.9, 70, 9)]
        scaled = [individual(i.objectives.acc, i.objectives.madds * 1000, i.objectives.params * 10) for i in base]
        weights = (0.4, 0.4, 0.2)
        assert weighted_crowding(base, weights) == pytest.approx(weighted_crowding(scaled, weights))


class TestParetoArchive:
    def test_dominated_members_are_evicted(self):
        archive = ParetoArchive()
        weak, strong = individual(0.5, 20, 5, (0,)), individual(0.6, 10, 5, (1,))
        archive.add(weak)
        archive.add(strong)
        assert [m.genes for m in archive.members] == [(1,)]
        archive.add(individual(0.55, 15, 5, (2,)))
        assert [m.genes for m in archive.members] == [(1,)]

    def test_no_member_dominated_by_anything_added(self):
        rng, archive, added = Rng(5), ParetoArchive(), []
        for i in range(200):
            ind = individual(float(rng.uniform()), 1 + int(rng.integers(99)), 1 + int(rng.integers(99)), (i,))
            added.append(ind)
            archive.add(ind)
        for member in archive.members:
            assert not any(dominates(other.objectives, member.objectives) for other in added)
        assert archive.best.objectives.acc == max(ind.objectives.acc for ind in added)

    def test_best_record_outlives_eviction(self):
        archive = ParetoArchive()
        archive.add(individual(0.9, 80, 5, (0,)))
        archive.add(individual(0.9, 10, 5, (1,)))
        assert [m.genes for m in archive.members] == [(1,)]
        assert archive.best.objectives.acc == 0.9


class TestOperators:
    def test_crossover_of_identical_parents(self):
        parent = Architecture((0, 1, 2, 1))
        assert crossover(parent, parent, Rng(0)) == parent

    def test_crossover_mixes_parents(self):
        a, b = Architecture((0, 0, 0, 0)), Architecture((1, 1, 1, 1))
        child = crossover(a, b, Rng(3))
        assert set(child.genes) <= {0, 1}

    def test_no_mutation_copies_parent(self, t1):
        parent = Architecture((0, 1, 2, 1))
        assert hierarchical_mutation(parent, t1, Rng(0), 0.0, (0.2, 0.65, 0.15)) == parent
        assert hierarchical_mutation(parent, t1, Rng(0), 1.0, (0.0, 0.0, 0.0)) == parent

    def test_layer_mutation_rate(self, t1):
        rng, changed = Rng(1), 0
        parent = Architecture((0, 0, 0, 0))
        for _ in range(2000):
            child = hierarchical_mutation(parent, t1, rng, 0.3, (1.0, 0.0, 0.0))
            changed += sum(1 for g in child.genes if g != 0)
        assert changed / 8000 == pytest.approx(0.3, abs=0.025)

    def test_expansion_mode_without_alternatives(self, t1):
        parent = Architecture((0, 1, 0, 1))
        assert hierarchical_mutation(parent, t1, Rng(0), 1.0, (0.0, 1.0, 0.0)) == parent

    def test_kernel_or_prune_mode(self, t1):
        rng = Rng(4)
        outcomes = {hierarchical_mutation(Architecture((0, 0, 0, 0)), t1, rng, 1.0, (0.0, 0.0, 1.0)).genes[0]
                    for _ in range(50)}
        assert outcomes == {1, 2}
        skip_parent = Architecture((2, 2, 2, 2))
        assert hierarchical_mutation(skip_parent, t1, rng, 1.0, (0.0, 0.0, 1.0)) == skip_parent

    def test_offspring_paths(self, t1):
        a, b = Architecture((0, 0, 0, 0)), Architecture((1, 1, 1, 1))
        copy_config = SearchConfig(p_km=0.0, p_m=0.0)
        assert make_offspring((a, b), t1, copy_config, Rng(0)) == a
        cross_config = SearchConfig(p_km=1.0)
        assert set(make_offspring((a, b), t1, cross_config, Rng(0)).genes) <= {0, 1}


class TestSelectEquispaced:
    @pytest.fixture
    def front(self):
        return [individual(0.5 + i / 10, 100 * (5 - i), 1, (i,)) for i in range(5)]

    def test_three_of_five(self, front):
        assert [a.genes for a in select_equispaced(front, 3)] == [(4,), (2,), (0,)]

    def test_whole_front(self, front):
        assert len(select_equispaced(front, 5)) == 5

    def test_single_is_cheapest(self, front):
        assert select_equispaced(front, 1) == [Architecture((4,))]

    def test_too_many(self, front):
        with pytest.raises(InputError):
            select_equispaced(front, 6)


class TestSearchConfig:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            SearchConfig(w_acc=0.5, w_madds=0.5, w_params=0.5)

    def test_default_budget_is_fraction_of_max(self, t1):
        assert SearchConfig().resolve_madds_max(t1) == int(0.6 * 282240)
        assert SearchConfig(madds_max=50000).resolve_madds_max(t1) == 50000


class TestEvolve:
    @pytest.fixture
    def config(self):
        return SearchConfig(population=6, generations=3, acc_min=0.4, seed=7)

    def test_final_population_is_feasible(self, t1, config):
        result = evolve(None, t1, None, config, evaluator=depth_evaluator(t1), progress=False)
        assert len(result.population) == config.population
        for ind in result.population + result.archive.members:
            assert is_feasible(ind.objectives, result.madds_max, config.acc_min)
            assert (ind.objectives.madds, ind.objectives.params) == objective_costs(t1, ind.arch)
        assert len(result.generations) == config.generations + 1

    def test_madds_checked_before_evaluation(self, t1, config):
        result = evolve(None, t1, None, config, evaluator=depth_evaluator(t1), progress=False)
        checked, rejected = set(), set()
        for event in result.audit:
            if event["event"] == "madds_check":
                checked.add(event["genes"])
                if not event["passed"]:
                    rejected.add(event["genes"])
            else:
                assert event["genes"] in checked
                assert event["genes"] not in rejected

    def test_each_architecture_evaluated_once(self, t1, config):
        evaluator = CountingEvaluator(depth_evaluator(t1))
        evolve(None, t1, None, config, evaluator=evaluator, progress=False)
        assert len(evaluator.calls) == len(set(evaluator.calls))

    def test_archive_keeps_every_feasible_elite(self, t1, config):
        result = evolve(None, t1, None, config, evaluator=depth_evaluator(t1), progress=False)
        seen = {}
        for event in result.audit:
            if event["event"] == "evaluate" and event["value"] >= config.acc_min:
                arch = parse_architecture(event["genes"])
                seen[arch.genes] = ObjectiveVector(event["value"], *objective_costs(t1, arch))
        assert seen
        for member in result.archive.members:
            assert not any(dominates(other, member.objectives) for other in seen.values())
        assert result.archive.best.objectives.acc == max(obj.acc for obj in seen.values())

    def test_deterministic_across_workers(self, t1, config):
        serial = evolve(None, t1, None, config, evaluator=depth_evaluator(t1), progress=False)
        threaded = evolve(None, t1, None, config, workers=3, evaluator=depth_evaluator(t1), progress=False)
        assert individuals_frame(serial.population).equals(individuals_frame(threaded.population))
        assert serial.audit == threaded.audit

    def test_infeasible_constraints(self, t1):
        config = SearchConfig(population=4, generations=1, acc_min=0.95, init_draw_budget=50)
        with pytest.raises(ConfigError, match="constraints too tight"):
            evolve(None, t1, None, config, evaluator=depth_evaluator(t1), progress=False)

    def test_cost_extremes_are_infeasible(self, t1):
        config = SearchConfig(acc_min=0.4)
        evaluate = depth_evaluator(t1)
        madds_max = config.resolve_madds_max(t1)
        for arch in (identity_genes(t1), max_cost_genes(t1)):
            madds, params = objective_costs(t1, arch)
            assert not is_feasible(ObjectiveVector(evaluate(arch), madds, params), madds_max, config.acc_min)

    def test_needs_an_accuracy_source(self, t1, config):
        with pytest.raises(InputError):
            evolve(None, t1, None, config, progress=False)

    def test_refuses_test_split(self, t1, config, tiny_splits):
        with pytest.raises(InputError):
            evolve(build_supernet(t1, seed=0), t1, tiny_splits.test, config, progress=False)

    def test_one_shot_search_on_supernet(self, t1, tiny_splits):
        config = SearchConfig(population=4, generations=1, acc_min=0.0, seed=1)
        result = evolve(build_supernet(t1, seed=0), t1, tiny_splits.val, config, progress=False)
        assert len(result.front) >= 1
        assert result.archive.best is not None

    def test_outputs(self, tmp_path, t1, config):
        result = evolve(None, t1, None, config, evaluator=depth_evaluator(t1), progress=False)
        paths = write_search_outputs(result, tmp_path / "search", k=3)
        for path in paths.values():
            assert path.exists()
        selected = paths["selected"].read_text().splitlines()
        assert len(selected) == min(3, len(result.front))
