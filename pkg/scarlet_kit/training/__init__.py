"""Supernet training strategies and one-shot evaluation."""

from scarlet_kit.training.trainer import (
    AccuracyHistogram,
    OneShotEvaluator,
    TrainConfig,
    TrainLog,
    accuracy_histogram,
    evaluate_oneshot,
    fairnas_step,
    spos_step,
    train_supernet,
)
