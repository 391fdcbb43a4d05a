"""Exact removal of stabilizers by weight folding.

A stabilizer is a bias-free 1x1 conv with nothing after it, so the conv that
follows it can absorb it: conv(conv(x, w1), w2) == conv(x, w3) with
w3[o, u] = sum_p w2[o, p] * w1[p, u] at every kernel offset.
"""

import copy
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from scarlet_kit.engine.layers import Conv2d
from scarlet_kit.engine.tensor import Parameter, Rng
from scarlet_kit.errors import DimensionError, InputError
from scarlet_kit.search_space.blocks import InvertedBottleneck, SequentialNet, SkipBlock, StabilizerBlock
from scarlet_kit.search_space.spec import Architecture, validate_architecture
from scarlet_kit.search_space.supernet import Supernet

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4


def fold_pointwise(w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """Compose a pointwise conv `w1` (c_mid, c_in, 1, 1) into a following conv `w2` (m, c_mid, k, k)."""
    if w1.ndim != 4 or w1.shape[2:] != (1, 1):
        raise DimensionError(f"fold_pointwise: w1 must be (c_mid, c_in, 1, 1), got {w1.shape}")
    if w2.ndim != 4:
        raise DimensionError(f"fold_pointwise: w2 must be (m, c_mid, k, k), got {w2.shape}")
    if w2.shape[1] != w1.shape[0]:
        raise DimensionError(f"fold_pointwise: w2 axis 1 ({w2.shape[1]}) != w1 axis 0 ({w1.shape[0]})")
    return np.einsum("opij,pu->ouij", w2, w1[:, :, 0, 0], optimize=False)


def _absorb(conv: Conv2d, pending: np.ndarray) -> None:
    if conv.groups != 1:
        raise InputError(f"{conv.name}: only a dense conv can absorb a stabilizer")
    conv.weight = Parameter(conv.weight.name, fold_pointwise(pending, conv.weight.value).astype(conv.weight.value.dtype))
    conv.in_channels = pending.shape[1]


def fold_network(net: SequentialNet) -> SequentialNet:
    """Copy of `net` with skips dropped and every stabilizer run folded into the next conv.

    Runs of consecutive stabilizers are composed right to left before being
    absorbed; a trailing run goes into the tail conv. Folding a net with no
    stabilizers returns an equivalent copy.
    """
    net = copy.deepcopy(net)
    blocks, pending = [], None
    for block in net.blocks:
        if isinstance(block, SkipBlock):
            continue
        if isinstance(block, StabilizerBlock):
            if block.activation:
                logger.warning(f"⚠️ {block.name} applies {block.activation}; folding it is not exact")
            w = block.conv.weight.value
            pending = w if pending is None else fold_pointwise(pending, w)
            continue
        if pending is not None:
            if not isinstance(block, InvertedBottleneck):
                raise InputError(f"{block.name}: cannot absorb a stabilizer into a {block.kind} block")
            _absorb(block.expand, pending)
            pending = None
        blocks.append(block)
    if pending is not None:
        _absorb(net.tail.conv, pending)
    return SequentialNet(net.stem, blocks, net.tail, net.resolution)


def strip_stabilizers(arch: Architecture, supernet: Supernet) -> SequentialNet:
    """Standalone network of `arch` with its inherited weights and no stabilizers."""
    validate_architecture(supernet.spec, arch)
    return fold_network(supernet.path(arch))


@dataclass
class FoldReport:
    max_abs_output_diff: float
    probes: int
    tolerance: float
    probes_exceeding: int = 0

    @property
    def passed(self) -> bool:
        return self.max_abs_output_diff <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "max_abs_output_diff": self.max_abs_output_diff,
            "probes": self.probes,
            "tolerance": self.tolerance,
            "probes_exceeding": self.probes_exceeding,
            "passed": self.passed,
        }


def verify_equivalence(net_a: SequentialNet, net_b: SequentialNet, probes: int = 100,
                       tolerance: float = DEFAULT_TOLERANCE, rng: Optional[Rng] = None,
                       batch_size: int = 4) -> FoldReport:
    """Max abs eval-mode logit difference over `probes` random input batches."""
    if net_a.input_shape != net_b.input_shape or net_a.classes != net_b.classes:
        raise InputError(
            f"networks are not comparable: inputs {net_a.input_shape} vs {net_b.input_shape}, "
            f"classes {net_a.classes} vs {net_b.classes}"
        )
    if probes < 1:
        raise InputError(f"probes must be >= 1, got {probes}")
    rng = rng or Rng(0)
    worst, exceeding = 0.0, 0
    for _ in range(probes):
        x = rng.uniform(0.0, 1.0, size=(batch_size, *net_a.input_shape)).astype(np.float32)
        logits_a, _ = net_a.forward(x, "eval")
        logits_b, _ = net_b.forward(x, "eval")
        diff = float(np.max(np.abs(logits_a - logits_b)))
        worst = max(worst, diff)
        exceeding += diff > tolerance
    report = FoldReport(worst, probes, tolerance, int(exceeding))
    logger.debug(f"📊 Equivalence check: max diff {worst:.3e} over {probes} probes ({exceeding} above {tolerance})")
    return report
