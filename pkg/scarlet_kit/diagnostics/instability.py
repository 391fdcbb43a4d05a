"""Training-instability comparisons between two supernet runs (typically without and with ELS)."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from scarlet_kit.errors import InputError
from scarlet_kit.training.trainer import AccuracyHistogram, TrainLog

logger = logging.getLogger(__name__)

UNDERESTIMATE_THRESHOLD = 0.3


@dataclass
class InstabilityReport:
    per_epoch: pd.DataFrame
    final_mean_b_higher: bool
    final_std_b_lower: bool

    def summary(self) -> dict:
        return {
            "epochs": len(self.per_epoch),
            "mean_std_a": float(self.per_epoch["std_a"].mean()),
            "mean_std_b": float(self.per_epoch["std_b"].mean()),
            "final_mean_b_higher": self.final_mean_b_higher,
            "final_std_b_lower": self.final_std_b_lower,
        }


def instability_report(log_a: TrainLog, log_b: TrainLog) -> InstabilityReport:
    """Per-epoch mean/std of step training accuracy for two runs, side by side."""
    stats_a, stats_b = log_a.epoch_stats(), log_b.epoch_stats()
    if len(stats_a) != len(stats_b) or len(log_a.steps) != len(log_b.steps):
        raise InputError(
            f"logs are not comparable: {len(stats_a)} vs {len(stats_b)} epochs, "
            f"{len(log_a.steps)} vs {len(log_b.steps)} steps"
        )
    if stats_a.empty:
        raise InputError("cannot compare empty training logs")
    frame = pd.DataFrame({
        "epoch": stats_a["epoch"],
        "mean_a": stats_a["train_acc_mean"],
        "std_a": stats_a["train_acc_std"],
        "mean_b": stats_b["train_acc_mean"].to_numpy(),
        "std_b": stats_b["train_acc_std"].to_numpy(),
    })
    frame["diff_mean"] = frame["mean_b"] - frame["mean_a"]
    frame["diff_std"] = frame["std_b"] - frame["std_a"]
    last = frame.iloc[-1]
    return InstabilityReport(frame, bool(last["mean_b"] > last["mean_a"]), bool(last["std_b"] < last["std_a"]))


@dataclass(frozen=True)
class SampleSpread:
    std: float
    mass_below: float
    mean: float


def accuracy_spread(accuracies: Sequence[float], threshold: float = UNDERESTIMATE_THRESHOLD) -> SampleSpread:
    """Spread of sampled one-shot accuracies and the share of paths below `threshold`."""
    values = np.asarray(accuracies, dtype=np.float64)
    if values.size == 0:
        raise InputError("no accuracies to summarise")
    return SampleSpread(float(values.std()), float(np.mean(values < threshold)), float(values.mean()))


def write_histogram_csv(histogram: AccuracyHistogram, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    histogram.to_frame().to_csv(path, index=False, float_format="%.2f")
    return path
