"""Path samplers for single-path supernet training."""

from typing import List

from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import SpecError
from scarlet_kit.search_space.spec import Architecture, SpaceSpec


def sample_uniform(spec: SpaceSpec, rng: Rng) -> Architecture:
    """Each layer's gene drawn uniformly and independently."""
    return Architecture(tuple(int(rng.integers(count)) for count in spec.choice_counts()))


def sample_fair_group(spec: SpaceSpec, rng: Rng) -> List[Architecture]:
    """m paths drawn without replacement per layer: column l of the group is a permutation of 0..m-1."""
    if not spec.is_rectangular():
        raise SpecError(
            f"space {spec.name!r} has unequal choice counts {spec.choice_counts()}; "
            "strict-fairness sampling needs the same count at every layer"
        )
    m = spec.choice_counts()[0]
    columns = [rng.permutation(m) for _ in range(spec.num_layers)]
    return [Architecture(tuple(int(column[k]) for column in columns)) for k in range(m)]
