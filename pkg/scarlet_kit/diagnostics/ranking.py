"""Rank agreement between one-shot and ground-truth accuracies."""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import kendalltau

from scarlet_kit.errors import InputError


def _check_pair(scores_a: Sequence[float], scores_b: Sequence[float]):
    a, b = np.asarray(scores_a, dtype=np.float64), np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"score vectors must be 1-D and equally long, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise InputError(f"need at least 2 scores to rank, got {a.size}")
    return a, b


def kendall_tau(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Tie-corrected Kendall tau-b; 0.0 when either side is entirely tied."""
    a, b = _check_pair(scores_a, scores_b)
    tau, _ = kendalltau(a, b, variant="b")
    return 0.0 if tau is None or math.isnan(tau) else float(tau)


@dataclass(frozen=True)
class PairAgreement:
    correct: int
    total: int

    @property
    def fraction(self) -> float:
        return self.correct / self.total if self.total else 0.0


def ranking_pair_agreement(predicted: Sequence[float], truth: Sequence[float], gap: float = 0.05) -> PairAgreement:
    """Among pairs whose true scores differ by at least `gap`, how many the prediction orders the same way.

    A tie in the prediction counts as a wrong order.
    """
    p, t = _check_pair(predicted, truth)
    i, j = np.triu_indices(p.size, k=1)
    true_diff, pred_diff = t[i] - t[j], p[i] - p[j]
    decisive = np.abs(true_diff) >= gap
    correct = np.sign(pred_diff[decisive]) == np.sign(true_diff[decisive])
    return PairAgreement(int(correct.sum()), int(decisive.sum()))
