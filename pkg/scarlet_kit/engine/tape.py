"""Op nodes and the static per-network tape.

Networks here are fixed sequential chains, so a tape is simply the list of
nodes visited by one forward pass. `Tape.backward` walks it in reverse and each
node adds its parameter gradients into the owning `Parameter.grad`.
"""

from typing import List, Optional

import numpy as np

from scarlet_kit.engine import functional as F
from scarlet_kit.engine.tensor import Parameter
from scarlet_kit.errors import StateError


class OpNode:
    """One recorded primitive. `forward` caches what `backward` needs."""

    name = "op"

    def __init__(self):
        self._cache = None

    def _require_forward(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        return self._cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2dNode(OpNode):
    name = "conv2d"

    def __init__(self, weight: Parameter, stride: int = 1, padding: int = 0, groups: int = 1):
        super().__init__()
        self.weight = weight
        self.stride, self.padding, self.groups = stride, padding, groups

    def forward(self, x):
        out = F.conv2d(x, self.weight.value, self.stride, self.padding, self.groups)
        self._cache = x
        return out

    def backward(self, grad):
        x = self._require_forward()
        grad_x, grad_w = F.conv2d_backward(grad, x, self.weight.value, self.stride, self.padding, self.groups)
        self.weight.grad += grad_w
        return grad_x


class BatchNormNode(OpNode):
    name = "batchnorm"

    def __init__(self, gamma: Parameter, beta: Parameter, running_mean, running_var, mode: str):
        super().__init__()
        self.gamma, self.beta = gamma, beta
        self.running_mean, self.running_var = running_mean, running_var
        self.mode = mode

    def forward(self, x):
        out, self._cache = F.batchnorm(
            x, self.gamma.value, self.beta.value, self.running_mean, self.running_var, self.mode
        )
        return out

    def backward(self, grad):
        cache = self._require_forward()
        grad_x, grad_gamma, grad_beta = F.batchnorm_backward(grad, self.gamma.value, cache)
        self.gamma.grad += grad_gamma
        self.beta.grad += grad_beta
        return grad_x


class ActivationNode(OpNode):
    name = "activation"

    def __init__(self, kind: str):
        super().__init__()
        self.kind = kind

    def forward(self, x):
        out = F.activation(x, self.kind)
        self._cache = x
        return out

    def backward(self, grad):
        return F.activation_backward(grad, self._require_forward(), self.kind)


class SqueezeExciteNode(OpNode):
    name = "squeeze_excite"

    def __init__(self, w_reduce: Parameter, w_expand: Parameter):
        super().__init__()
        self.w_reduce, self.w_expand = w_reduce, w_expand

    def forward(self, x):
        out, self._cache = F.squeeze_excite(x, self.w_reduce.value, self.w_expand.value)
        return out

    def backward(self, grad):
        cache = self._require_forward()
        grad_x, grad_r, grad_e = F.squeeze_excite_backward(grad, self.w_reduce.value, self.w_expand.value, cache)
        self.w_reduce.grad += grad_r
        self.w_expand.grad += grad_e
        return grad_x


class ClassifierHeadNode(OpNode):
    """Terminal node: its forward takes labels and yields (logits, loss)."""

    name = "classifier_head"

    def __init__(self, fc_weight: Parameter, fc_bias: Parameter):
        super().__init__()
        self.fc_weight, self.fc_bias = fc_weight, fc_bias

    def forward(self, x, labels=None):
        logits, loss, cache = F.classifier_head(x, self.fc_weight.value, self.fc_bias.value, labels)
        if labels is not None:
            self._cache = cache
        return logits, loss

    def backward(self, grad=1.0):
        cache = self._require_forward()
        grad_x, grad_w, grad_b = F.classifier_head_backward(float(grad), self.fc_weight.value, cache)
        self.fc_weight.grad += grad_w
        self.fc_bias.grad += grad_b
        return grad_x


class Tape:
    """Ordered record of the nodes of one forward pass."""

    def __init__(self):
        self.nodes: List[OpNode] = []

    def record(self, node: OpNode) -> None:
        self.nodes.append(node)

    def backward(self, grad=1.0) -> Optional[np.ndarray]:
        """Propagate `grad` (scalar for a loss) from the last node to the input.

        The tape is kept, so calling backward twice accumulates twice.
        """
        if not self.nodes:
            raise StateError("backward called on an empty tape (run a forward pass with this tape first)")
        for node in reversed(self.nodes):
            grad = node.backward(grad)
        return grad

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)
