"""Analytic cost model: multiply-adds and parameter counts.

Costs are computed from a layout (the per-layer blocks a path actually runs),
never by building a network, so the evolutionary search can reject an
over-budget candidate before any evaluation. madds count convolutions and the
final linear layer; BN, activations, pooling and the SE channel scale are free.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

from scarlet_kit.engine.functional import conv_output_size
from scarlet_kit.engine.layers import SqueezeExcite
from scarlet_kit.search_space.spec import Architecture, ChoiceSpec, SpaceSpec, validate_architecture

STEM_KERNEL, STEM_STRIDE = 3, 2


@dataclass(frozen=True)
class LayoutEntry:
    layer: int
    choice_index: int
    choice: ChoiceSpec
    in_channels: int
    out_channels: int
    stride: int
    hidden_channels: Optional[int] = None


def path_layout(spec: SpaceSpec, arch: Architecture) -> Tuple[List[LayoutEntry], int]:
    """Every block of the path, skip and ELS included. Returns (entries, tail input channels)."""
    validate_architecture(spec, arch)
    entries = []
    for index, (layer, gene) in enumerate(zip(spec.layers, arch.genes)):
        choice = layer.choices[gene]
        hidden = layer.in_channels * choice.expansion if choice.kind == "ib" else None
        entries.append(LayoutEntry(index, gene, choice, layer.in_channels, layer.out_channels, layer.stride, hidden))
    return entries, spec.layers[-1].out_channels


def stripped_layout(spec: SpaceSpec, arch: Architecture) -> Tuple[List[LayoutEntry], int]:
    """The layout left after skips are dropped and stabilizers are folded forward.

    A folded stabilizer leaves its input width on the next conv, so the next IB
    block (or the tail) reads the channel count from before the stabilizer run.
    Hidden widths keep their supernet value.
    """
    full, _ = path_layout(spec, arch)
    entries, channels = [], spec.stem.out_channels
    for entry in full:
        if entry.choice.is_identity_like:
            continue
        entries.append(LayoutEntry(
            entry.layer, entry.choice_index, entry.choice, channels, entry.out_channels,
            entry.stride, entry.hidden_channels,
        ))
        channels = entry.out_channels
    return entries, channels


def _stem_costs(spec: SpaceSpec) -> Tuple[int, int, int]:
    size = conv_output_size(spec.input_resolution, STEM_KERNEL, STEM_STRIDE, STEM_KERNEL // 2)
    c_in, c_out = spec.input_channels, spec.stem.out_channels
    weights = c_out * c_in * STEM_KERNEL ** 2
    return size * size * weights, weights + 2 * c_out, size


def _block_costs(entry: LayoutEntry, size: int) -> Tuple[int, int, int]:
    """(madds, params, output spatial size) of one block on a size x size input."""
    c_in, c_out = entry.in_channels, entry.out_channels
    if entry.choice.kind == "skip":
        return 0, 0, size
    if entry.choice.kind == "els":
        return size * size * c_out * c_in, c_out * c_in, size
    hidden, k = entry.hidden_channels, entry.choice.kernel
    out = conv_output_size(size, k, entry.stride, k // 2)
    madds = size * size * hidden * c_in + out * out * hidden * k * k + out * out * c_out * hidden
    params = c_in * hidden + hidden * k * k + hidden * c_out + 2 * (hidden + hidden + c_out)
    if entry.choice.se:
        reduced = max(1, hidden // SqueezeExcite.RATIO)
        madds += 2 * hidden * reduced
        params += 2 * hidden * reduced
    return madds, params, out


def _tail_costs(spec: SpaceSpec, c_in: int, size: int) -> Tuple[int, int]:
    channels, classes = spec.tail.channels, spec.classes
    madds = size * size * channels * c_in + channels * classes
    params = channels * c_in + 2 * channels + channels * classes + classes
    return madds, params


def layout_costs(spec: SpaceSpec, entries: List[LayoutEntry], tail_in: int) -> Tuple[int, int]:
    """(madds, params) of stem + entries + tail."""
    madds, params, size = _stem_costs(spec)
    for entry in entries:
        block_madds, block_params, size = _block_costs(entry, size)
        madds += block_madds
        params += block_params
    tail_madds, tail_params = _tail_costs(spec, tail_in, size)
    return madds + tail_madds, params + tail_params


def count_madds(spec: SpaceSpec, arch: Architecture, folded: bool = False) -> int:
    """Multiply-adds of the path; `folded=True` counts the network left after stabilizer removal."""
    layout = stripped_layout(spec, arch) if folded else path_layout(spec, arch)
    return layout_costs(spec, *layout)[0]


def count_params(spec: SpaceSpec, arch: Architecture, folded: bool = False) -> int:
    """Learnable parameters of the path (BN running statistics excluded)."""
    layout = stripped_layout(spec, arch) if folded else path_layout(spec, arch)
    return layout_costs(spec, *layout)[1]


def stripped_param_count(spec: SpaceSpec, arch: Architecture) -> int:
    return count_params(spec, arch, folded=True)
