"""Search spaces, the weight-sharing supernet, path samplers and the cost model."""

from scarlet_kit.search_space.costs import count_madds, count_params, stripped_layout, stripped_param_count
from scarlet_kit.search_space.sampling import sample_fair_group, sample_uniform
from scarlet_kit.search_space.spec import (
    Architecture,
    ChoiceSpec,
    LayerSpec,
    SpaceSpec,
    enumerate_architectures,
    format_architecture,
    load_space,
    parse_architecture,
    validate_architecture,
    validate_space,
)
from scarlet_kit.search_space.supernet import Supernet, build_supernet, forward_path
