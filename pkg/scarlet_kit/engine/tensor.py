"""Tensors, parameters and the seeded generator used across the engine.

Tensors are plain numpy arrays. Networks run in float32; every kernel keeps the
dtype of its inputs, so gradient checks can run the same code in float64.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from scarlet_kit.errors import DimensionError

DTYPE = np.float32


def as_tensor(data, shape: Optional[Sequence[int]] = None, dtype=DTYPE) -> np.ndarray:
    """Copy `data` into a fresh C-ordered array, optionally checking its shape."""
    array = np.array(data, dtype=dtype, order="C")
    if shape is not None and tuple(array.shape) != tuple(shape):
        raise DimensionError(f"expected shape {tuple(shape)}, got {tuple(array.shape)}")
    return array


def check_rank4(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise DimensionError(f"{name} must be (n, c, h, w), got rank {x.ndim} shape {x.shape}")


@dataclass
class Parameter:
    """A learnable tensor with its gradient buffer and optimizer velocity."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)
    velocity: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(
                f"parameter {self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}"
            )

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad[...] = 0


class Rng:
    """Seeded counter-based generator (Philox) with a small helper surface.

    The same seed yields the same draw sequence on every platform numpy supports.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.Philox(self.seed))

    def spawn(self, key: int) -> "Rng":
        """Independent child stream keyed by an integer (stable across runs)."""
        return Rng((self.seed * 1_000_003 + int(key) * 7919 + 17) % (2 ** 63))

    def normal(self, shape, std: float = 1.0, dtype=DTYPE) -> np.ndarray:
        return (self.generator.standard_normal(size=shape) * std).astype(dtype)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size=size)

    def random(self) -> float:
        return float(self.generator.random())

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, p=None) -> int:
        return int(self.generator.choice(n, p=p))
