"""Standalone ground truth and the ranking experiment."""

from scarlet_kit.oracle.ground_truth import (
    GroundTruthTable,
    OracleConfig,
    RankingResult,
    build_standalone,
    exhaustive_ground_truth,
    ground_truth,
    ranking_experiment,
    sampled_ground_truth,
    train_standalone,
)
