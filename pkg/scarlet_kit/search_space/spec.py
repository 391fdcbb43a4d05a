"""Search space descriptions and architecture encodings.

Spaces are JSON documents (see docs/space_spec_schema.md) parsed into pydantic
models. Choices may be written in full (`{"kind": "ib", "expansion": 3, ...}`)
or as labels: `E3K5`, `E6K7_SE`, `skip`, `els`.
"""

import itertools
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from scarlet_kit.config import SPACES_DIR
from scarlet_kit.errors import InputError, SpecError

logger = logging.getLogger(__name__)

KERNELS = (3, 5, 7)
EXPANSIONS = (1, 2, 3, 6)
_LABEL = re.compile(r"^E(\d+)K(\d+)(_SE)?$")


class ChoiceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["ib", "skip", "els"]
    expansion: Optional[int] = None
    kernel: Optional[int] = None
    se: bool = False

    @classmethod
    def from_label(cls, label: str) -> "ChoiceSpec":
        lowered = label.strip().lower()
        if lowered in ("skip", "els"):
            return cls(kind=lowered)
        match = _LABEL.match(label.strip().upper())
        if not match:
            raise SpecError(f"unrecognised choice label {label!r} (expected E<x>K<y>[_SE], skip or els)")
        return cls(kind="ib", expansion=int(match.group(1)), kernel=int(match.group(2)), se=bool(match.group(3)))

    @property
    def label(self) -> str:
        if self.kind != "ib":
            return self.kind
        return f"E{self.expansion}K{self.kernel}" + ("_SE" if self.se else "")

    @property
    def is_identity_like(self) -> bool:
        """Skip and ELS both disappear from the final standalone network."""
        return self.kind in ("skip", "els")


class LayerSpec(BaseModel):
    in_channels: int = Field(gt=0)
    out_channels: int = Field(gt=0)
    stride: Literal[1, 2] = 1
    choices: List[ChoiceSpec]

    @field_validator("choices", mode="before")
    @classmethod
    def _parse_labels(cls, value):
        return [ChoiceSpec.from_label(c) if isinstance(c, str) else c for c in value]


class StemSpec(BaseModel):
    out_channels: int = Field(gt=0)


class TailSpec(BaseModel):
    channels: int = Field(gt=0)


class SpaceSpec(BaseModel):
    name: str = "custom"
    input_resolution: int = Field(gt=0)
    input_channels: int = Field(default=3, gt=0)
    classes: int = Field(ge=2)
    stem: StemSpec
    tail: TailSpec
    layers: List[LayerSpec]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def choice_counts(self) -> List[int]:
        return [len(layer.choices) for layer in self.layers]

    def is_rectangular(self) -> bool:
        return len(set(self.choice_counts())) == 1

    def with_stabilizers(self) -> "SpaceSpec":
        """Copy of the space with every skip choice replaced by an ELS choice."""
        layers = [
            layer.model_copy(update={"choices": [ChoiceSpec(kind="els") if c.kind == "skip" else c for c in layer.choices]})
            for layer in self.layers
        ]
        return self.model_copy(update={"layers": layers, "name": f"{self.name}+els"})

    def has_stabilizers(self) -> bool:
        return any(c.kind == "els" for layer in self.layers for c in layer.choices)

    def labels(self, layer: int) -> List[str]:
        return [c.label for c in self.layers[layer].choices]


def validate_space(spec: SpaceSpec) -> SpaceSpec:
    """Structural checks pydantic cannot express; raises SpecError naming the layer."""
    if not spec.layers:
        raise SpecError(f"space {spec.name!r} has no searchable layers")
    previous = spec.stem.out_channels
    for index, layer in enumerate(spec.layers):
        where = f"space {spec.name!r} layer {index}"
        if layer.in_channels != previous:
            raise SpecError(f"{where}: in_channels {layer.in_channels} does not match previous output {previous}")
        if len(layer.choices) < 2:
            raise SpecError(f"{where}: needs at least 2 choices, got {len(layer.choices)}")
        for choice in layer.choices:
            if choice.kind == "ib":
                if choice.kernel not in KERNELS:
                    raise SpecError(f"{where}: kernel {choice.kernel} not in {KERNELS}")
                if choice.expansion not in EXPANSIONS:
                    raise SpecError(f"{where}: expansion {choice.expansion} not in {EXPANSIONS}")
                continue
            if choice.expansion is not None or choice.kernel is not None or choice.se:
                raise SpecError(f"{where}: {choice.kind} choice must not carry expansion/kernel/se")
            if layer.stride != 1:
                raise SpecError(f"{where}: {choice.kind} is only legal at stride-1 layers")
            if choice.kind == "skip" and layer.in_channels != layer.out_channels:
                raise SpecError(
                    f"{where}: skip cannot change channels ({layer.in_channels} -> {layer.out_channels}); use els"
                )
        previous = layer.out_channels
    return spec


def load_space(source: Union[str, Path]) -> SpaceSpec:
    """Load a bundled space by name (`t1`, `s1`, `s2`) or a JSON file by path."""
    path = Path(source)
    if not path.suffix and (SPACES_DIR / f"{source}.json").exists():
        path = SPACES_DIR / f"{source}.json"
    if not path.exists():
        raise FileNotFoundError(f"Space spec not found: {source}")
    with open(path, "r", encoding="utf-8") as f:
        spec = SpaceSpec.model_validate(json.load(f))
    validate_space(spec)
    logger.debug(f"📋 Loaded space {spec.name!r}: {spec.num_layers} layers, choices {spec.choice_counts()}")
    return spec


def space_size(spec: SpaceSpec) -> int:
    size = 1
    for count in spec.choice_counts():
        size *= count
    return size


@dataclass(frozen=True)
class Architecture:
    """A concrete subnetwork: one choice index per searchable layer."""

    genes: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(int(g) for g in self.genes))

    def __str__(self):
        return "(" + ",".join(str(g) for g in self.genes) + ")"

    def __len__(self):
        return len(self.genes)

    def choices(self, spec: SpaceSpec) -> List[ChoiceSpec]:
        return [layer.choices[g] for layer, g in zip(spec.layers, self.genes)]


def parse_architecture(text: str) -> Architecture:
    """Parse the "(0,5,0,...)" notation; parentheses and spaces are optional."""
    stripped = text.strip().strip("()[]")
    try:
        genes = [int(part) for part in stripped.split(",") if part.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse architecture {text!r}: {exc}") from exc
    if not genes:
        raise InputError(f"empty architecture string {text!r}")
    return Architecture(tuple(genes))


def format_architecture(arch: Architecture) -> str:
    return str(arch)


def validate_architecture(spec: SpaceSpec, arch: Architecture) -> Architecture:
    if len(arch.genes) != spec.num_layers:
        raise InputError(f"architecture {arch} has {len(arch.genes)} genes, space has {spec.num_layers} layers")
    for index, (gene, count) in enumerate(zip(arch.genes, spec.choice_counts())):
        if not 0 <= gene < count:
            raise InputError(f"architecture {arch}: gene {gene} at layer {index} is outside [0, {count})")
    return arch


def enumerate_architectures(spec: SpaceSpec) -> Iterator[Architecture]:
    """Every architecture of the space in lexicographic gene order."""
    for genes in itertools.product(*(range(count) for count in spec.choice_counts())):
        yield Architecture(genes)


def identity_genes(spec: SpaceSpec) -> Optional[Architecture]:
    """The all-skip (or all-ELS) architecture, if every layer offers one."""
    genes = []
    for layer in spec.layers:
        index = next((i for i, c in enumerate(layer.choices) if c.is_identity_like), None)
        if index is None:
            return None
        genes.append(index)
    return Architecture(tuple(genes))


def max_cost_genes(spec: SpaceSpec) -> Architecture:
    """Per layer, the IB choice with the largest expansion x kernel^2 (the all-max architecture)."""
    genes = []
    for layer in spec.layers:
        best = max(
            (i for i, c in enumerate(layer.choices) if c.kind == "ib"),
            key=lambda i: (layer.choices[i].expansion * layer.choices[i].kernel ** 2, layer.choices[i].se),
        )
        genes.append(best)
    return Architecture(tuple(genes))
