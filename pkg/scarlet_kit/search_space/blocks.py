"""Choice blocks, stem, tail and the sequential network that chains them."""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from scarlet_kit.engine.layers import Activation, BatchNorm2d, ClassifierHead, Conv2d, Layer, SqueezeExcite
from scarlet_kit.engine.tape import Tape
from scarlet_kit.engine.tensor import DTYPE, Parameter, Rng
from scarlet_kit.errors import ConfigError, DimensionError, InputError
from scarlet_kit.search_space.spec import ChoiceSpec

logger = logging.getLogger(__name__)

STABILIZER_INITS = ("identity_noise", "random")


class Block:
    """A chain of layers with a shared parameter/buffer view."""

    kind = "block"

    def __init__(self, name: str):
        self.name = name
        self.sequence: List[Layer] = []

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.sequence for p in layer.parameters()]

    def buffers(self) -> Dict[str, np.ndarray]:
        merged = {}
        for layer in self.sequence:
            merged.update(layer.buffers())
        return merged

    def forward(self, x, mode="train", tape: Optional[Tape] = None):
        for layer in self.sequence:
            x = layer.forward(x, mode, tape)
        return x

    @property
    def first_conv(self) -> Optional[Conv2d]:
        return next((layer for layer in self.sequence if isinstance(layer, Conv2d)), None)


class InvertedBottleneck(Block):
    """Pointwise expand -> depthwise kxk -> [squeeze-excite] -> pointwise project.

    There is no residual add: the expansion conv must see the whole input so a
    preceding stabilizer can be folded into it.
    """

    kind = "ib"

    def __init__(self, name, in_channels, out_channels, stride, expansion, kernel, se, rng: Rng,
                 hidden: Optional[int] = None):
        super().__init__(name)
        hidden = hidden or in_channels * expansion
        self.expand = Conv2d(f"{name}.expand.conv", in_channels, hidden, 1, rng=rng)
        self.depthwise = Conv2d(f"{name}.depthwise.conv", hidden, hidden, kernel, stride, groups=hidden, rng=rng)
        self.se = SqueezeExcite(f"{name}.se", hidden, rng) if se else None
        self.project = Conv2d(f"{name}.project.conv", hidden, out_channels, 1, rng=rng)
        self.sequence = [
            self.expand, BatchNorm2d(f"{name}.expand.bn", hidden), Activation("relu6"),
            self.depthwise, BatchNorm2d(f"{name}.depthwise.bn", hidden), Activation("relu6"),
            *([self.se] if self.se else []),
            self.project, BatchNorm2d(f"{name}.project.bn", out_channels),
        ]


class SkipBlock(Block):
    kind = "skip"

    def forward(self, x, mode="train", tape: Optional[Tape] = None):
        return x


class StabilizerBlock(Block):
    """Equivariant learnable stabilizer: a bias-free 1x1 conv, no BN, no activation.

    `activation="relu"` builds the non-equivariant probe variant.
    """

    kind = "els"

    def __init__(self, name, in_channels, out_channels, rng: Rng,
                 init: str = "identity_noise", noise: float = 0.01, activation: Optional[str] = None):
        super().__init__(name)
        if init == "identity_noise":
            weight = np.zeros((out_channels, in_channels, 1, 1), dtype=DTYPE)
            diag = np.arange(min(in_channels, out_channels))
            weight[diag, diag, 0, 0] = 1.0
            weight += rng.normal(weight.shape, std=noise)
        elif init == "random":
            weight = None
        else:
            raise ConfigError(f"unknown stabilizer init {init!r}, expected one of {STABILIZER_INITS}")
        self.conv = Conv2d(f"{name}.conv", in_channels, out_channels, 1, rng=rng, weight=weight)
        self.activation = activation
        self.sequence = [self.conv] + ([Activation(activation)] if activation else [])


class Stem(Block):
    kind = "stem"

    def __init__(self, name, in_channels, out_channels, rng: Rng):
        super().__init__(name)
        self.conv = Conv2d(f"{name}.conv", in_channels, out_channels, 3, stride=2, rng=rng)
        self.sequence = [self.conv, BatchNorm2d(f"{name}.bn", out_channels), Activation("relu6")]


class Tail(Block):
    """1x1 conv + BN + relu6, then global pool + linear classifier."""

    kind = "tail"

    def __init__(self, name, in_channels, channels, classes, rng: Rng):
        super().__init__(name)
        self.conv = Conv2d(f"{name}.conv", in_channels, channels, 1, rng=rng)
        self.head = ClassifierHead(f"{name}.classifier", channels, classes, rng)
        self.sequence = [self.conv, BatchNorm2d(f"{name}.bn", channels), Activation("relu6")]

    def parameters(self):
        return super().parameters() + self.head.parameters()

    def forward(self, x, mode="train", tape: Optional[Tape] = None, labels=None):
        return self.head.forward(super().forward(x, mode, tape), labels, tape)


def build_block(name: str, choice: ChoiceSpec, in_channels: int, out_channels: int, stride: int, rng: Rng,
                stabilizer_init: str = "identity_noise", stabilizer_noise: float = 0.01,
                stabilizer_activation: Optional[str] = None, hidden: Optional[int] = None) -> Block:
    if choice.kind == "ib":
        return InvertedBottleneck(
            name, in_channels, out_channels, stride, choice.expansion, choice.kernel, choice.se, rng, hidden
        )
    if choice.kind == "skip":
        return SkipBlock(name)
    return StabilizerBlock(name, in_channels, out_channels, rng, stabilizer_init, stabilizer_noise, stabilizer_activation)


class SequentialNet:
    """stem -> blocks -> tail. Used for supernet paths and standalone networks alike."""

    def __init__(self, stem: Stem, blocks: Sequence[Block], tail: Tail, resolution: int):
        self.stem, self.blocks, self.tail = stem, list(blocks), tail
        self.resolution = resolution

    @property
    def input_shape(self):
        """(c, h, w) of one input sample."""
        return self.stem.conv.in_channels, self.resolution, self.resolution

    @property
    def classes(self) -> int:
        return self.tail.head.classes

    def modules(self) -> List[Block]:
        return [self.stem, *self.blocks, self.tail]

    def parameters(self) -> List[Parameter]:
        return [p for module in self.modules() for p in module.parameters()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for module in self.modules():
            state.update({p.name: p.value for p in module.parameters()})
            state.update(module.buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        load_tensors(self.state_dict(), state, owner="network")

    def features(self, x, mode="eval", tape: Optional[Tape] = None) -> np.ndarray:
        x = self.stem.forward(x, mode, tape)
        for block in self.blocks:
            x = block.forward(x, mode, tape)
        return x

    def forward(self, x, mode="eval", tape: Optional[Tape] = None, labels=None):
        """Returns (logits, loss); loss is None without labels."""
        return self.tail.forward(self.features(x, mode, tape), mode, tape, labels)


def load_tensors(target: Dict[str, np.ndarray], source: Dict[str, np.ndarray], owner: str) -> None:
    """Copy `source` into the live arrays of `target` in place; names and shapes must match exactly."""
    missing = sorted(set(target) - set(source))
    unexpected = sorted(set(source) - set(target))
    if missing or unexpected:
        raise InputError(f"{owner} state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
    for name, array in target.items():
        if array.shape != source[name].shape:
            raise DimensionError(f"{owner} tensor {name}: expected shape {array.shape}, got {source[name].shape}")
        array[...] = source[name]
