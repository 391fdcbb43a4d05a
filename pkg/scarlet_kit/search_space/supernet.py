"""Weight-sharing supernet: one parameter bank per (layer, choice) plus a shared stem and tail."""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from scarlet_kit.engine.checkpoint import load_checkpoint, save_checkpoint
from scarlet_kit.engine.tape import Tape
from scarlet_kit.engine.tensor import Parameter, Rng, as_tensor
from scarlet_kit.errors import InputError
from scarlet_kit.search_space.blocks import Block, SequentialNet, Stem, Tail, build_block, load_tensors
from scarlet_kit.search_space.spec import Architecture, SpaceSpec, validate_architecture, validate_space

logger = logging.getLogger(__name__)

COUNTERS_KEY = "meta.update_counts"


def bank_name(layer: int, choice: int) -> str:
    return f"layers.{layer}.choices.{choice}"


def bank_seed_key(layer: int, choice: int) -> int:
    return 1000 + layer * 100 + choice


class Supernet:
    """All candidate blocks of a space, held side by side.

    Each block draws its initial weights from its own child stream of the seed,
    so a bank's initial value depends only on (seed, layer, choice).
    """

    def __init__(self, spec: SpaceSpec, seed: int, stabilizer_init: str = "identity_noise",
                 stabilizer_noise: float = 0.01, stabilizer_activation: Optional[str] = None):
        validate_space(spec)
        self.spec = spec
        self.seed = seed
        self.stabilizer_activation = stabilizer_activation
        rng = Rng(seed)
        self.stem = Stem("stem", spec.input_channels, spec.stem.out_channels, rng.spawn(1))
        self.tail = Tail("tail", spec.layers[-1].out_channels, spec.tail.channels, spec.classes, rng.spawn(2))
        self.banks: List[List[Block]] = [
            [
                build_block(
                    bank_name(l, c), choice, layer.in_channels, layer.out_channels, layer.stride,
                    rng.spawn(bank_seed_key(l, c)), stabilizer_init, stabilizer_noise, stabilizer_activation,
                )
                for c, choice in enumerate(layer.choices)
            ]
            for l, layer in enumerate(spec.layers)
        ]
        self.update_counts = np.zeros((spec.num_layers, max(spec.choice_counts())), dtype=np.int64)

    def path(self, arch: Architecture) -> SequentialNet:
        """A view of the chosen path; it shares parameters with the supernet."""
        validate_architecture(self.spec, arch)
        blocks = [self.banks[l][g] for l, g in enumerate(arch.genes)]
        return SequentialNet(self.stem, blocks, self.tail, self.spec.input_resolution)

    def path_parameters(self, arch: Architecture) -> List[Parameter]:
        return self.path(arch).parameters()

    def parameters(self) -> List[Parameter]:
        params = self.stem.parameters()
        for bank in self.banks:
            for block in bank:
                params.extend(block.parameters())
        return params + self.tail.parameters()

    def record_update(self, arch: Architecture) -> None:
        for layer, gene in enumerate(arch.genes):
            self.update_counts[layer, gene] += 1

    def prefix_features(self, arch: Architecture, batch: np.ndarray, layer: int) -> np.ndarray:
        """Eval-mode input to `layer` when the preceding layers follow `arch`."""
        if not 0 <= layer < self.spec.num_layers:
            raise InputError(f"layer {layer} outside [0, {self.spec.num_layers})")
        validate_architecture(self.spec, arch)
        x = self.stem.forward(batch, "eval")
        for l in range(layer):
            x = self.banks[l][arch.genes[l]].forward(x, "eval")
        return x

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {}
        for module in [self.stem, *(b for bank in self.banks for b in bank), self.tail]:
            state.update({p.name: p.value for p in module.parameters()})
            state.update(module.buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        state = dict(state)
        counts = state.pop(COUNTERS_KEY, None)
        load_tensors(self.state_dict(), state, owner="supernet")
        if counts is not None:
            self.update_counts[...] = np.asarray(counts).astype(np.int64).reshape(self.update_counts.shape)

    def save(self, path) -> Path:
        state = dict(self.state_dict())
        state[COUNTERS_KEY] = self.update_counts.astype(np.float32)
        return save_checkpoint(path, state)

    @classmethod
    def load(cls, path, spec: SpaceSpec, stabilizer_activation: Optional[str] = None) -> "Supernet":
        supernet = cls(spec, seed=0, stabilizer_activation=stabilizer_activation)
        supernet.load_state_dict(load_checkpoint(path))
        logger.info(f"📂 Loaded supernet for space {spec.name!r} from {path}")
        return supernet


def build_supernet(spec: SpaceSpec, seed: int, **stabilizer_options) -> Supernet:
    supernet = Supernet(spec, seed, **stabilizer_options)
    logger.debug(
        f"🏗️ Built supernet {spec.name!r}: {sum(len(b) for b in supernet.banks)} choice blocks, "
        f"{sum(p.size for p in supernet.parameters())} parameters"
    )
    return supernet


def forward_path(supernet: Supernet, arch: Architecture, batch, mode: str = "eval",
                 tape: Optional[Tape] = None) -> np.ndarray:
    """Logits of the single path `arch`; only the chosen blocks run."""
    logits, _ = supernet.path(arch).forward(as_tensor(batch), mode, tape)
    return logits
