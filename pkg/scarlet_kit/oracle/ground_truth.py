"""Ground truth for ranking: standalone training of subnetworks and the ranking experiment.

Standalone networks are always built from the stripped layout (no skip and no
stabilizer blocks), trained from scratch on the train split and scored on the
held-out test split, the only consumer of that split.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from scarlet_kit.config import SHOW_PROGRESS
from scarlet_kit.data.dataset import Dataset, DatasetSplits, require_split
from scarlet_kit.diagnostics.ranking import PairAgreement, kendall_tau, ranking_pair_agreement
from scarlet_kit.engine.optim import sgd_step
from scarlet_kit.engine.tape import Tape
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import ConfigError, InputError, ParseError
from scarlet_kit.search_space.blocks import SequentialNet, Stem, Tail, build_block
from scarlet_kit.search_space.costs import count_madds, count_params, stripped_layout
from scarlet_kit.search_space.sampling import sample_uniform
from scarlet_kit.search_space.spec import (
    Architecture,
    SpaceSpec,
    enumerate_architectures,
    format_architecture,
    parse_architecture,
    space_size,
    validate_architecture,
)
from scarlet_kit.search_space.supernet import bank_name, bank_seed_key
from scarlet_kit.training.trainer import cosine_lr

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["genes", "acc", "madds", "params", "seed"]


class OracleConfig(BaseModel):
    epochs: int = Field(default=30, ge=1)
    batch_size: int = Field(default=32, ge=2)
    lr: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.9, ge=0)
    weight_decay: float = Field(default=4e-5, ge=0)
    seed: int = 0
    # auto: exhaustive when the space fits the enumeration budget, sampled otherwise
    ground_truth: Literal["auto", "exhaustive", "sampled"] = "auto"
    enumeration_budget: int = Field(default=256, ge=1)
    sample_size: int = Field(default=100, ge=2)
    ranking_sample: int = Field(default=81, ge=2)
    pair_gap: float = Field(default=0.05, ge=0)


def build_standalone(spec: SpaceSpec, arch: Architecture, seed: int) -> SequentialNet:
    """Freshly initialised network of the stripped layout.

    Tensor names match the supernet's, so a folded checkpoint of the same arch loads into it.
    """
    entries, tail_in = stripped_layout(spec, arch)
    rng = Rng(seed)
    stem = Stem("stem", spec.input_channels, spec.stem.out_channels, rng.spawn(1))
    blocks = [
        build_block(
            bank_name(e.layer, e.choice_index), e.choice, e.in_channels, e.out_channels, e.stride,
            rng.spawn(bank_seed_key(e.layer, e.choice_index)), hidden=e.hidden_channels,
        )
        for e in entries
    ]
    tail = Tail("tail", tail_in, spec.tail.channels, spec.classes, rng.spawn(2))
    return SequentialNet(stem, blocks, tail, spec.input_resolution)


def accuracy(net: SequentialNet, data: Dataset, batch_size: int = 256) -> float:
    if len(data) == 0:
        raise InputError("cannot score an empty dataset")
    correct = 0
    for x, y in data.batches(batch_size):
        logits, _ = net.forward(x, "eval")
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
    return correct / len(data)


def fit(net: SequentialNet, train: Dataset, config: OracleConfig, rng: Rng) -> None:
    """Plain SGD with cosine decay over every parameter of `net`."""
    params = net.parameters()
    per_epoch = sum(1 for _ in train.batches(config.batch_size, min_batch=2))
    total = config.epochs * per_epoch
    step = 0
    for _ in range(config.epochs):
        for x, y in train.batches(config.batch_size, rng, min_batch=2):
            tape = Tape()
            net.forward(x, "train", tape, y)
            tape.backward()
            sgd_step(params, cosine_lr(config.lr, step, total), config.momentum, config.weight_decay)
            step += 1


@dataclass(frozen=True)
class StandaloneResult:
    test_accuracy: float
    train_accuracy: float


def train_standalone(spec: SpaceSpec, arch: Architecture, splits: DatasetSplits, config: OracleConfig,
                     seed: Optional[int] = None) -> StandaloneResult:
    """Train the stripped network of `arch` from scratch and score it on the test split."""
    validate_architecture(spec, arch)
    require_split(splits.train, "train")
    require_split(splits.test, "test")
    seed = config.seed if seed is None else seed
    net = build_standalone(spec, arch, seed)
    fit(net, splits.train, config, Rng(seed).spawn(7))
    return StandaloneResult(accuracy(net, splits.test), accuracy(net, splits.train))


@dataclass(frozen=True)
class GroundTruthEntry:
    acc: float
    madds: int
    params: int
    seed: int


class GroundTruthTable:
    """Standalone test accuracies keyed by architecture genes."""

    def __init__(self, space: str, entries: Optional[Dict[Tuple[int, ...], GroundTruthEntry]] = None):
        self.space = space
        self.entries: Dict[Tuple[int, ...], GroundTruthEntry] = dict(entries or {})

    def __len__(self):
        return len(self.entries)

    def __contains__(self, arch: Architecture) -> bool:
        return arch.genes in self.entries

    def architectures(self) -> List[Architecture]:
        return [Architecture(genes) for genes in sorted(self.entries)]

    def lookup(self, arch: Architecture) -> GroundTruthEntry:
        if arch.genes not in self.entries:
            raise InputError(f"architecture {arch} is not in the ground-truth table for {self.space!r}")
        return self.entries[arch.genes]

    def __call__(self, arch: Architecture) -> float:
        return self.lookup(arch).acc

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"genes": format_architecture(Architecture(genes)), **asdict(self.entries[genes])}
            for genes in sorted(self.entries)
        ]
        return pd.DataFrame(rows, columns=TABLE_COLUMNS)

    def save_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        logger.info(f"💾 Saved ground truth for {len(self)} architectures to {path}")
        return path

    @classmethod
    def load_csv(cls, path, space: str = "custom") -> "GroundTruthTable":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Ground-truth table not found: {path}")
        frame = pd.read_csv(path, dtype={"genes": str})
        if list(frame.columns) != TABLE_COLUMNS:
            raise ParseError(f"{path}: line 1: expected header {','.join(TABLE_COLUMNS)}, got {','.join(frame.columns)}")
        entries = {}
        for line, row in enumerate(frame.itertuples(index=False), start=2):
            try:
                arch = parse_architecture(row.genes)
                entry = GroundTruthEntry(float(row.acc), int(row.madds), int(row.params), int(row.seed))
            except (InputError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {line}: {exc}") from exc
            if not 0.0 <= entry.acc <= 1.0:
                raise ParseError(f"{path}: line {line}: accuracy {entry.acc} outside [0, 1]")
            entries[arch.genes] = entry
        return cls(space, entries)


def _ground_truth(spec: SpaceSpec, archs: Sequence[Architecture], splits: DatasetSplits, config: OracleConfig,
                  workers: int, progress: bool) -> GroundTruthTable:
    def run(arch: Architecture) -> Tuple[Tuple[int, ...], GroundTruthEntry]:
        result = train_standalone(spec, arch, splits, config)
        entry = GroundTruthEntry(
            result.test_accuracy, count_madds(spec, arch, folded=True), count_params(spec, arch, folded=True), config.seed
        )
        return arch.genes, entry

    logger.info(f"🚀 Training {len(archs)} standalone networks for {spec.name!r} ({config.epochs} epochs each)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(tqdm(executor.map(run, archs), total=len(archs), desc="standalone", disable=not progress))
    else:
        results = [run(arch) for arch in tqdm(archs, desc="standalone", disable=not progress)]
    table = GroundTruthTable(spec.name, dict(results))
    logger.info(f"✅ Ground truth ready: {len(table)} entries")
    return table


def exhaustive_ground_truth(spec: SpaceSpec, splits: DatasetSplits, config: OracleConfig, workers: int = 1,
                            progress: bool = SHOW_PROGRESS) -> GroundTruthTable:
    size = space_size(spec)
    if size > config.enumeration_budget:
        raise ConfigError(
            f"space {spec.name!r} has {size} architectures, above oracle.enumeration_budget="
            f"{config.enumeration_budget}; use sampled ground truth instead"
        )
    return _ground_truth(spec, list(enumerate_architectures(spec)), splits, config, workers, progress)


def sampled_ground_truth(spec: SpaceSpec, splits: DatasetSplits, config: OracleConfig, rng: Rng,
                         sample_size: Optional[int] = None, workers: int = 1,
                         progress: bool = SHOW_PROGRESS) -> GroundTruthTable:
    """Ground truth on distinct uniformly drawn architectures, for spaces too large to enumerate."""
    target = min(sample_size or config.sample_size, space_size(spec))
    seen: Dict[Tuple[int, ...], Architecture] = {}
    while len(seen) < target:
        arch = sample_uniform(spec, rng)
        seen.setdefault(arch.genes, arch)
    return _ground_truth(spec, list(seen.values()), splits, config, workers, progress)


def ground_truth(spec: SpaceSpec, splits: DatasetSplits, config: OracleConfig, workers: int = 1,
                 progress: bool = SHOW_PROGRESS) -> GroundTruthTable:
    """Exhaustive or sampled table according to `config.ground_truth`."""
    mode = config.ground_truth
    if mode == "auto":
        mode = "exhaustive" if space_size(spec) <= config.enumeration_budget else "sampled"
        logger.info(f"📋 Ground-truth mode for {spec.name!r}: {mode}")
    if mode == "exhaustive":
        return exhaustive_ground_truth(spec, splits, config, workers, progress)
    return sampled_ground_truth(spec, splits, config, Rng(config.seed).spawn(4), workers=workers, progress=progress)


@dataclass
class RankingResult:
    tau: float
    pairs: PairAgreement
    scatter: pd.DataFrame

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.scatter.to_csv(path, index=False)
        return path


def ranking_experiment(evaluator: Callable[[Architecture], float], table: GroundTruthTable, sample_size: int,
                       rng: Rng, archs: Optional[Iterable[Architecture]] = None, gap: float = 0.05) -> RankingResult:
    """Kendall tau between `evaluator` scores (e.g. one-shot accuracies) and the table's ground truth."""
    if archs is None:
        pool = table.architectures()
        if sample_size < len(pool):
            pool = [pool[i] for i in sorted(rng.permutation(len(pool))[:sample_size])]
    else:
        pool = list(archs)
    truth = [table.lookup(arch).acc for arch in pool]
    predicted = [float(evaluator(arch)) for arch in pool]
    scatter = pd.DataFrame(
        {"genes": [format_architecture(a) for a in pool], "oneshot_acc": predicted, "true_acc": truth}
    )
    tau = kendall_tau(predicted, truth)
    pairs = ranking_pair_agreement(predicted, truth, gap)
    logger.info(f"📊 Kendall tau over {len(pool)} architectures: {tau:.4f} ({pairs.correct}/{pairs.total} pairs ordered)")
    return RankingResult(tau, pairs, scatter)
