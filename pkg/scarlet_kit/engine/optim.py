"""SGD with momentum and L2 weight decay."""

from typing import Iterable

import numpy as np

from scarlet_kit.engine.tensor import Parameter
from scarlet_kit.errors import ConfigError


def sgd_step(params: Iterable[Parameter], lr: float, momentum: float = 0.9, weight_decay: float = 0.0) -> None:
    """One in-place update: v <- momentum*v + (g + wd*w); w <- w - lr*v; grads are zeroed after."""
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if momentum < 0 or weight_decay < 0:
        raise ConfigError(f"momentum and weight decay must be non-negative, got {momentum} / {weight_decay}")
    for param in params:
        step = param.grad + weight_decay * param.value if weight_decay else param.grad.copy()
        if param.velocity is None:
            param.velocity = np.zeros_like(param.value)
        param.velocity *= momentum
        param.velocity += step
        param.value -= np.asarray(lr, dtype=param.value.dtype) * param.velocity
        param.zero_grad()


def zero_grads(params: Iterable[Parameter]) -> None:
    for param in params:
        param.zero_grad()
