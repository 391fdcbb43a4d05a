"""Single-path supernet training (SPOS and FairNAS) and one-shot evaluation.

SPOS samples one uniform path per step and updates it straight away. FairNAS
samples m paths without replacement per layer, sums their gradients, scales
the sum by 1/m and makes one update, so every choice block trains the same
number of times.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from scarlet_kit.config import SHOW_PROGRESS
from scarlet_kit.data.dataset import Dataset, require_split
from scarlet_kit.engine.optim import sgd_step, zero_grads
from scarlet_kit.engine.tape import Tape
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import ConfigError, InputError, ParseError, SpecError
from scarlet_kit.search_space.sampling import sample_fair_group, sample_uniform
from scarlet_kit.search_space.spec import Architecture
from scarlet_kit.search_space.supernet import Supernet

logger = logging.getLogger(__name__)

HISTOGRAM_BIN_WIDTH = 0.05
EVAL_BATCH = 256
STEP_COLUMNS = ["step", "epoch", "genes", "lr", "loss", "acc"]
# spawn keys below this belong to weight init, data splits and the pipeline stages
TRAIN_STREAM_BASE = 10_000


class TrainConfig(BaseModel):
    strategy: Literal["spos", "fairnas"] = "fairnas"
    # FairNAS epochs; SPOS runs `spos_epochs`, or m x epochs when unset
    epochs: int = Field(default=1, ge=1)
    spos_epochs: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.9, ge=0)
    weight_decay: float = Field(default=4e-5, ge=0)
    seed: int = 0
    els_enabled: bool = False
    stabilizer_init: Literal["identity_noise", "random"] = "identity_noise"
    stabilizer_noise: float = Field(default=0.01, ge=0)
    stabilizer_activation: Optional[Literal["relu"]] = None
    val_paths: int = Field(default=8, ge=0)

    def effective_epochs(self, choices_per_layer: int) -> int:
        if self.strategy == "fairnas":
            return self.epochs
        return self.spos_epochs or choices_per_layer * self.epochs

    def stabilizer_options(self) -> dict:
        return {
            "stabilizer_init": self.stabilizer_init,
            "stabilizer_noise": self.stabilizer_noise,
            "stabilizer_activation": self.stabilizer_activation,
        }


@dataclass
class TrainLog:
    strategy: str
    steps: List[dict] = field(default_factory=list)
    epochs: List[dict] = field(default_factory=list)
    update_counts: Optional[np.ndarray] = None

    def steps_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.steps, columns=STEP_COLUMNS)

    def epoch_stats(self) -> pd.DataFrame:
        """Per-epoch mean and std of step training accuracy, with validation accuracy when logged."""
        frame = self.steps_frame()
        stats = frame.groupby("epoch")["acc"].agg(train_acc_mean="mean", train_acc_std="std").fillna(0.0)
        if self.epochs:
            val = pd.DataFrame(self.epochs).set_index("epoch")
            stats = stats.join(val[["val_acc"]], how="left")
        return stats.reset_index()

    def write_csv(self, path) -> Path:
        """Step CSV: step, path genes, loss, acc (plus epoch and lr)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.steps_frame().to_csv(path, index=False)
        return path

    @classmethod
    def read_csv(cls, path, strategy: str = "unknown") -> "TrainLog":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Training log not found: {path}")
        frame = pd.read_csv(path, dtype={"genes": str})
        missing = [c for c in STEP_COLUMNS if c not in frame.columns]
        if missing:
            raise ParseError(f"{path}: line 1: missing columns {missing}")
        return cls(strategy, frame[STEP_COLUMNS].to_dict("records"))

    def summary(self) -> dict:
        stats = self.epoch_stats()
        last = stats.iloc[-1] if len(stats) else None
        return {
            "strategy": self.strategy,
            "steps": len(self.steps),
            "epochs": len(stats),
            "final_train_acc": float(last["train_acc_mean"]) if last is not None else None,
            "final_val_acc": float(last["val_acc"]) if last is not None and "val_acc" in stats else None,
            "update_counts": self.update_counts.tolist() if self.update_counts is not None else None,
        }


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / max(total_steps, 1)))


def _path_loss(supernet: Supernet, arch: Architecture, x, y) -> Tuple[float, float]:
    """Forward and backward one path in train mode; returns (loss, accuracy)."""
    tape = Tape()
    logits, loss = supernet.path(arch).forward(x, "train", tape, y)
    tape.backward()
    return loss, float(np.mean(np.argmax(logits, axis=1) == y))


def spos_step(supernet: Supernet, arch: Architecture, x, y, lr: float, config: TrainConfig) -> Tuple[float, float]:
    """One single-path update: only the sampled path's parameters move."""
    loss, acc = _path_loss(supernet, arch, x, y)
    sgd_step(supernet.path_parameters(arch), lr, config.momentum, config.weight_decay)
    supernet.record_update(arch)
    return loss, acc


def fairnas_step(supernet: Supernet, group: List[Architecture], x, y, lr: float,
                 config: TrainConfig) -> Tuple[float, float]:
    """Accumulate the gradients of all m paths on the same batch, average them and take one step."""
    losses, accs = zip(*(_path_loss(supernet, arch, x, y) for arch in group))
    params = supernet.parameters()
    for param in params:
        param.grad /= len(group)
    sgd_step(params, lr, config.momentum, config.weight_decay)
    for arch in group:
        supernet.record_update(arch)
    return float(np.mean(losses)), float(np.mean(accs))


def _check_stabilizers(supernet: Supernet, config: TrainConfig) -> None:
    has_els = supernet.spec.has_stabilizers()
    if config.els_enabled and not has_els:
        raise ConfigError(
            f"train.els_enabled is set but space {supernet.spec.name!r} has no els choice "
            "(build the supernet from spec.with_stabilizers())"
        )
    if has_els and not config.els_enabled:
        logger.warning(f"⚠️ Space {supernet.spec.name!r} contains els choices but train.els_enabled is off")


def train_supernet(supernet: Supernet, train: Dataset, config: TrainConfig,
                   val: Optional[Dataset] = None, progress: bool = SHOW_PROGRESS) -> TrainLog:
    require_split(train, "train")
    if val is not None:
        require_split(val, "val")
    _check_stabilizers(supernet, config)
    spec = supernet.spec
    if config.strategy == "fairnas" and not spec.is_rectangular():
        raise SpecError(f"fairnas needs equal choice counts per layer, space {spec.name!r} has {spec.choice_counts()}")

    rng = Rng(config.seed)
    path_rng, batch_rng = rng.spawn(TRAIN_STREAM_BASE), rng.spawn(TRAIN_STREAM_BASE + 1)
    val_archs = []
    if val is not None:
        val_archs = [sample_uniform(spec, rng.spawn(TRAIN_STREAM_BASE + 2 + i)) for i in range(config.val_paths)]
    m = max(spec.choice_counts())
    epochs = config.effective_epochs(m)
    per_epoch = sum(1 for _ in train.batches(config.batch_size, min_batch=2))
    if per_epoch == 0:
        raise InputError(f"training split of {len(train)} samples yields no batch of at least 2")
    total = epochs * per_epoch

    log = TrainLog(config.strategy)
    logger.info(
        f"🚀 Training supernet {spec.name!r} with {config.strategy}: {epochs} epochs x {per_epoch} steps "
        f"(els={'on' if config.els_enabled else 'off'})"
    )
    step = 0
    for epoch in tqdm(range(epochs), desc=f"{config.strategy} epochs", disable=not progress):
        for x, y in train.batches(config.batch_size, batch_rng, min_batch=2):
            lr = cosine_lr(config.lr, step, total)
            if config.strategy == "spos":
                arch = sample_uniform(spec, path_rng)
                loss, acc = spos_step(supernet, arch, x, y, lr, config)
                genes = str(arch)
            else:
                group = sample_fair_group(spec, path_rng)
                loss, acc = fairnas_step(supernet, group, x, y, lr, config)
                genes = ";".join(str(arch) for arch in group)
            log.steps.append({"step": step, "epoch": epoch, "genes": genes, "lr": lr, "loss": loss, "acc": acc})
            step += 1
        if val_archs:
            val_acc = float(np.mean([evaluate_oneshot(supernet, arch, val) for arch in val_archs]))
            log.epochs.append({"epoch": epoch, "val_acc": val_acc})
            logger.info(f"✅ Epoch {epoch + 1}/{epochs}: val acc over {len(val_archs)} paths {val_acc:.4f}")
    zero_grads(supernet.parameters())
    log.update_counts = supernet.update_counts.copy()
    return log


def evaluate_oneshot(supernet: Supernet, arch: Architecture, valset: Dataset, batch_size: int = EVAL_BATCH) -> float:
    """Top-1 accuracy of `arch` with inherited weights, in eval mode."""
    require_split(valset, "val", "train")
    if len(valset) == 0:
        raise InputError("cannot evaluate on an empty validation set")
    net = supernet.path(arch)
    correct = 0
    for x, y in valset.batches(batch_size):
        logits, _ = net.forward(x, "eval")
        correct += int(np.sum(np.argmax(logits, axis=1) == y))
    return correct / len(valset)


class OneShotEvaluator:
    """Callable arch -> accuracy with a per-genes cache."""

    def __init__(self, supernet: Supernet, valset: Dataset, batch_size: int = EVAL_BATCH):
        self.supernet, self.valset, self.batch_size = supernet, valset, batch_size
        self.cache: Dict[Tuple[int, ...], float] = {}

    def __call__(self, arch: Architecture) -> float:
        if arch.genes not in self.cache:
            self.cache[arch.genes] = evaluate_oneshot(self.supernet, arch, self.valset, self.batch_size)
        return self.cache[arch.genes]


@dataclass
class AccuracyHistogram:
    edges: np.ndarray
    counts: np.ndarray
    accuracies: np.ndarray

    def mass_below(self, threshold: float) -> float:
        return float(np.mean(self.accuracies < threshold))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_low": self.edges[:-1], "bin_high": self.edges[1:], "count": self.counts})


def accuracy_histogram(supernet: Supernet, valset: Dataset, n_samples: int, rng: Rng,
                       evaluator: Optional[Callable[[Architecture], float]] = None) -> AccuracyHistogram:
    """One-shot accuracies of `n_samples` uniform paths, binned at width 0.05 on [0, 1]."""
    if n_samples < 1:
        raise InputError(f"n_samples must be >= 1, got {n_samples}")
    evaluator = evaluator or OneShotEvaluator(supernet, valset)
    accuracies = np.array([evaluator(sample_uniform(supernet.spec, rng)) for _ in range(n_samples)])
    edges = np.linspace(0.0, 1.0, int(round(1 / HISTOGRAM_BIN_WIDTH)) + 1)
    counts, _ = np.histogram(accuracies, bins=edges)
    return AccuracyHistogram(edges, counts, accuracies)
