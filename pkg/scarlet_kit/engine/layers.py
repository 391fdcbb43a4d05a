"""Stateful layers built on the functional kernels.

A layer owns its `Parameter`s (and, for batch norm, running statistics). Passing
a `Tape` to `forward` records an op node for backpropagation; without a tape the
pure kernel runs and nothing is cached, which keeps eval-mode forwards safe to
share across threads.
"""

import math
from typing import Dict, List, Optional

import numpy as np

from scarlet_kit.engine import functional as F
from scarlet_kit.engine.tape import (
    ActivationNode,
    BatchNormNode,
    ClassifierHeadNode,
    Conv2dNode,
    SqueezeExciteNode,
    Tape,
)
from scarlet_kit.engine.tensor import DTYPE, Parameter, Rng


def he_normal(rng: Rng, shape, fan_in: int) -> np.ndarray:
    return rng.normal(shape, std=math.sqrt(2.0 / fan_in))


class Layer:
    def parameters(self) -> List[Parameter]:
        return []

    def buffers(self) -> Dict[str, np.ndarray]:
        return {}


class Conv2d(Layer):
    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, groups: int = 1, rng: Optional[Rng] = None, weight: Optional[np.ndarray] = None):
        self.name = name
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.groups = kernel, stride, groups
        self.padding = kernel // 2
        shape = (out_channels, in_channels // groups, kernel, kernel)
        if weight is None:
            weight = he_normal(rng, shape, fan_in=(in_channels // groups) * kernel * kernel)
        self.weight = Parameter(f"{name}.weight", np.asarray(weight, dtype=DTYPE))

    def parameters(self):
        return [self.weight]

    def forward(self, x, mode="train", tape: Optional[Tape] = None):
        if tape is None:
            return F.conv2d(x, self.weight.value, self.stride, self.padding, self.groups)
        node = Conv2dNode(self.weight, self.stride, self.padding, self.groups)
        tape.record(node)
        return node.forward(x)

    def madds(self, out_h: int, out_w: int) -> int:
        return out_h * out_w * self.out_channels * (self.in_channels // self.groups) * self.kernel ** 2


class BatchNorm2d(Layer):
    def __init__(self, name: str, channels: int):
        self.name = name
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=DTYPE))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=DTYPE))
        self.running_mean = np.zeros(channels, dtype=DTYPE)
        self.running_var = np.ones(channels, dtype=DTYPE)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean, f"{self.name}.running_var": self.running_var}

    def forward(self, x, mode="train", tape: Optional[Tape] = None):
        if tape is None:
            out, _ = F.batchnorm(x, self.gamma.value, self.beta.value, self.running_mean, self.running_var, mode)
            return out
        node = BatchNormNode(self.gamma, self.beta, self.running_mean, self.running_var, mode)
        tape.record(node)
        return node.forward(x)


class Activation(Layer):
    def __init__(self, kind: str):
        self.kind = kind

    def forward(self, x, mode="train", tape: Optional[Tape] = None):
        if tape is None:
            return F.activation(x, self.kind)
        node = ActivationNode(self.kind)
        tape.record(node)
        return node.forward(x)


class SqueezeExcite(Layer):
    RATIO = 4

    def __init__(self, name: str, channels: int, rng: Rng):
        self.name = name
        self.channels = channels
        self.reduced = max(1, channels // self.RATIO)
        self.w_reduce = Parameter(f"{name}.reduce.weight", he_normal(rng, (self.reduced, channels, 1, 1), channels))
        self.w_expand = Parameter(f"{name}.expand.weight", he_normal(rng, (channels, self.reduced, 1, 1), self.reduced))

    def parameters(self):
        return [self.w_reduce, self.w_expand]

    def forward(self, x, mode="train", tape: Optional[Tape] = None):
        if tape is None:
            return F.squeeze_excite(x, self.w_reduce.value, self.w_expand.value)[0]
        node = SqueezeExciteNode(self.w_reduce, self.w_expand)
        tape.record(node)
        return node.forward(x)


class ClassifierHead(Layer):
    def __init__(self, name: str, features: int, classes: int, rng: Rng):
        self.name = name
        self.features, self.classes = features, classes
        self.fc_weight = Parameter(f"{name}.fc.weight", rng.normal((classes, features), std=math.sqrt(1.0 / features)))
        self.fc_bias = Parameter(f"{name}.fc.bias", np.zeros(classes, dtype=DTYPE))

    def parameters(self):
        return [self.fc_weight, self.fc_bias]

    def forward(self, x, labels=None, tape: Optional[Tape] = None):
        """Returns (logits, loss); loss is None without labels."""
        if tape is None or labels is None:
            logits, loss, _ = F.classifier_head(x, self.fc_weight.value, self.fc_bias.value, labels)
            return logits, loss
        node = ClassifierHeadNode(self.fc_weight, self.fc_bias)
        tape.record(node)
        return node.forward(x, labels)
