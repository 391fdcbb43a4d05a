"""Synthetic image-classification data, external loaders and split discipline.

The validation split is carved out of the training data; the test split is
reserved for standalone ground-truth runs and is refused by the trainer and
the search (see `require_split`).
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from scarlet_kit.engine.checkpoint import decode_checkpoint, encode_checkpoint
from scarlet_kit.engine.tensor import DTYPE, Rng
from scarlet_kit.errors import DimensionError, InputError, ParseError

logger = logging.getLogger(__name__)

SPLITS = ("all", "train", "val", "test")
NOISE_STD = 0.1
PATTERNS = ("stripes", "checker", "blob", "corner")
# clear of the spawn keys used for weight init and training
SPLIT_STREAM_KEY = 20_000


class DatasetConfig(BaseModel):
    seed: int = 0
    # 4096 train / 512 val / 1024 test with the default fractions
    n: int = Field(default=5632, ge=2)
    classes: int = Field(default=4, ge=2)
    size: int = Field(default=16, ge=4)
    channels: int = Field(default=3, ge=1)
    val_fraction: float = Field(default=1 / 9, gt=0, lt=1)
    test_fraction: float = Field(default=2 / 11, gt=0, lt=1)
    # external data replaces the synthetic generator when set
    path: Optional[str] = None
    format: Literal["scnt", "csv"] = "scnt"


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    classes: int
    split: str = "all"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DimensionError(f"dataset images must be (n, c, h, w), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DimensionError(f"expected {self.images.shape[0]} labels, got shape {self.labels.shape}")
        if self.split not in SPLITS:
            raise InputError(f"unknown split tag {self.split!r}, expected one of {SPLITS}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise InputError(f"labels must lie in [0, {self.classes})")
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self):
        return int(self.labels.size)

    @property
    def sample_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray, split: str) -> "Dataset":
        return Dataset(self.images[indices].copy(), self.labels[indices].copy(), self.classes, split)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.classes)

    def batches(self, batch_size: int, rng: Optional[Rng] = None, min_batch: int = 1) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Mini-batches in order, or shuffled when `rng` is given; a remainder smaller than `min_batch` is dropped."""
        if batch_size < 1:
            raise InputError(f"batch size must be >= 1, got {batch_size}")
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            index = order[start:start + batch_size]
            if index.size < min_batch:
                break
            yield self.images[index], self.labels[index]


@dataclass(frozen=True)
class DatasetSplits:
    train: Dataset
    val: Dataset
    test: Dataset


def require_split(dataset: Dataset, *allowed: str) -> Dataset:
    """Guard used at API boundaries so the test split never reaches training or search."""
    if dataset.split not in allowed:
        raise InputError(f"this operation accepts {allowed} data, got the {dataset.split!r} split")
    return dataset


def _pattern(kind: str, variant: int, size: int, rng: Rng) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    if kind == "stripes":
        angle = variant * math.pi / 4 + rng.uniform(-0.2, 0.2)
        freq = 2.0 + variant + rng.uniform(-0.3, 0.3)
        phase = rng.uniform(0, 2 * math.pi)
        return 0.5 + 0.5 * np.sin(2 * math.pi * freq * (xx * math.cos(angle) + yy * math.sin(angle)) + phase)
    if kind == "checker":
        cells = 2 + variant
        ox, oy = rng.uniform(0, 1, size=2)
        return ((np.floor(xx * cells + ox) + np.floor(yy * cells + oy)) % 2).astype(np.float64)
    if kind == "blob":
        cx, cy = rng.uniform(0.3, 0.7, size=2)
        radius = 0.18 + 0.05 * variant + rng.uniform(-0.03, 0.03)
        return np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius ** 2))
    corner = (variant + int(rng.integers(4))) % 4
    fx = xx if corner in (0, 3) else 1 - xx
    fy = yy if corner in (0, 1) else 1 - yy
    return np.clip(1 - np.sqrt(fx ** 2 + fy ** 2) / math.sqrt(2) + rng.uniform(-0.1, 0.1), 0, 1)


def generate_synthetic(seed: int, n: int, classes: int = 4, size: int = 16, channels: int = 3) -> Dataset:
    """Balanced class-conditional procedural images plus Gaussian noise, pure in its arguments.

    Class k draws pattern family k mod 4 (stripes, checker, radial blob, corner
    gradient); higher classes reuse a family with a different variant.
    """
    if classes < 2:
        raise InputError(f"need at least 2 classes, got {classes}")
    if n % classes:
        raise InputError(f"n={n} is not divisible by classes={classes}; balanced classes are required")
    rng = Rng(seed)
    labels = np.repeat(np.arange(classes, dtype=np.int64), n // classes)[rng.permutation(n)]
    images = np.empty((n, channels, size, size), dtype=DTYPE)
    for i, label in enumerate(labels):
        pattern = _pattern(PATTERNS[label % 4], int(label // 4), size, rng)
        tint = 0.6 + 0.4 * rng.uniform(size=channels)
        contrast = rng.uniform(0.7, 1.0)
        image = contrast * pattern[None] * tint[:, None, None] + rng.normal((channels, size, size), std=NOISE_STD, dtype=np.float64)
        images[i] = np.clip(image, 0.0, 1.0)
    logger.debug(f"🎨 Generated {n} synthetic samples ({classes} classes, {channels}x{size}x{size}, seed {seed})")
    return Dataset(images, labels, classes)


def split(dataset: Dataset, val_fraction: float, seed: int, test_fraction: float = 2 / 11) -> DatasetSplits:
    """Test is held out first, then validation is carved from what remains for training."""
    for name, fraction in (("val_fraction", val_fraction), ("test_fraction", test_fraction)):
        if not 0 < fraction < 1:
            raise InputError(f"{name} must be in (0, 1), got {fraction}")
    n = len(dataset)
    order = Rng(seed).spawn(SPLIT_STREAM_KEY).permutation(n)
    n_test = int(round(n * test_fraction))
    n_val = int(round((n - n_test) * val_fraction))
    n_train = n - n_test - n_val
    if min(n_test, n_val, n_train) < 1:
        raise InputError(f"split of {n} samples leaves an empty split (train={n_train}, val={n_val}, test={n_test})")
    test_idx, val_idx, train_idx = order[:n_test], order[n_test:n_test + n_val], order[n_test + n_val:]
    return DatasetSplits(
        train=dataset.subset(np.sort(train_idx), "train"),
        val=dataset.subset(np.sort(val_idx), "val"),
        test=dataset.subset(np.sort(test_idx), "test"),
    )


def build_splits(config: DatasetConfig) -> DatasetSplits:
    if config.path:
        data = load_external(config.path, config.format, config.classes, config.channels)
    else:
        data = generate_synthetic(config.seed, config.n, config.classes, config.size, config.channels)
    splits = split(data, config.val_fraction, config.seed, config.test_fraction)
    logger.info(
        f"📊 Dataset splits: {len(splits.train)} train / {len(splits.val)} val / {len(splits.test)} test"
    )
    return splits


# ------------------------------------------------------------------ persistence

def save_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint({"images": dataset.images, "labels": dataset.labels.astype(np.float32)}))
    logger.info(f"💾 Saved {len(dataset)} samples to {path}")
    return path


def write_dataset_csv(dataset: Dataset, path) -> Path:
    """Labeled-CSV export: header `label,p0,p1,...` with pixels flattened in (c, h, w) order."""
    flat = dataset.images.reshape(len(dataset), -1)
    frame = pd.DataFrame(flat, columns=[f"p{i}" for i in range(flat.shape[1])])
    frame.insert(0, "label", dataset.labels)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def _rescale(images: np.ndarray) -> np.ndarray:
    """Values already in [0, 1] are kept; anything else is min-max rescaled."""
    low, high = float(images.min()), float(images.max())
    if low >= 0.0 and high <= 1.0:
        return images
    if high == low:
        return np.zeros_like(images)
    return ((images - low) / (high - low)).astype(DTYPE)


def _load_scnt(path: Path, classes: Optional[int]) -> Dataset:
    tensors = decode_checkpoint(path.read_bytes(), source=str(path))
    missing = {"images", "labels"} - set(tensors)
    if missing:
        raise ParseError(f"{path}: missing reserved tensors {sorted(missing)}")
    images, raw_labels = tensors["images"], tensors["labels"]
    if images.ndim != 4 or raw_labels.ndim != 1 or raw_labels.size != images.shape[0]:
        raise ParseError(f"{path}: images {images.shape} and labels {raw_labels.shape} do not line up")
    if raw_labels.size == 0:
        raise ParseError(f"{path}: no samples")
    labels = raw_labels.astype(np.int64)
    if np.any(labels != raw_labels) or labels.min() < 0:
        raise ParseError(f"{path}: labels must be non-negative integers")
    classes = classes or int(labels.max()) + 1
    if labels.max() >= classes:
        raise ParseError(f"{path}: label {int(labels.max())} >= classes {classes}")
    return Dataset(_rescale(images.astype(DTYPE)), labels, classes)


def _load_csv(path: Path, classes: Optional[int], channels: int) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if not header or header[0] != "label" or header[1:] != [f"p{i}" for i in range(len(header) - 1)]:
        raise ParseError(f"{path}: line 1: header must be 'label,p0,p1,...'")
    pixels = len(header) - 1
    side = math.isqrt(max(pixels // channels, 0))
    if pixels == 0 or pixels % channels or side * side * channels != pixels:
        raise ParseError(f"{path}: line 1: {pixels} pixel columns do not form {channels} square channels")
    try:
        frame = pd.read_csv(path, dtype=np.float64)
    except (pd.errors.ParserError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if frame.empty:
        raise ParseError(f"{path}: no samples after the header")
    for row, values in enumerate(frame.to_numpy(), start=2):
        if np.isnan(values).any():
            raise ParseError(f"{path}: line {row}: missing or non-numeric value")
        label = values[0]
        if label != int(label) or label < 0 or (classes is not None and label >= classes):
            raise ParseError(f"{path}: line {row}: label {label:g} is not a valid class index (classes={classes})")
    labels = frame["label"].to_numpy().astype(np.int64)
    classes = classes or int(labels.max()) + 1
    images = frame.drop(columns="label").to_numpy().astype(DTYPE).reshape(len(frame), channels, side, side)
    return Dataset(_rescale(images), labels, classes)


def load_external(path, format: str = "scnt", classes: Optional[int] = None, channels: int = 3) -> Dataset:
    """Load a dataset from the SCNT container (`images`, `labels`) or a labeled CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    if format == "scnt":
        dataset = _load_scnt(path, classes)
    elif format == "csv":
        dataset = _load_csv(path, classes, channels)
    else:
        raise InputError(f"unknown dataset format {format!r}, expected 'scnt' or 'csv'")
    logger.info(f"📂 Loaded {len(dataset)} samples ({dataset.classes} classes) from {path}")
    return dataset
