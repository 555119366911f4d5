"""
Predictive-quality metrics: accuracy, NLL, ECE and Brier score.

ECE uses equal-width bins over the max-probability confidence; a sample
with confidence c falls in the bin (lo, hi] containing it. Empty bins
contribute nothing.
"""

from __future__ import annotations

import numpy as np

from app.core.types import ConfigError
from app.metrics.predictions import PROB_FLOOR, ProbBatch

DEFAULT_ECE_BINS = 15


def accuracy(batch: ProbBatch) -> float:
    labels = batch.require_labels()
    return float(np.mean(batch.probs.argmax(axis=1) == labels))


def nll(batch: ProbBatch) -> float:
    labels = batch.require_labels()
    picked = batch.probs[np.arange(batch.size), labels]
    return float(-np.log(np.clip(picked, PROB_FLOOR, 1.0)).mean())


def ece(batch: ProbBatch, bins: int = DEFAULT_ECE_BINS) -> float:
    labels = batch.require_labels()
    if bins < 1:
        raise ConfigError(f"ECE needs >= 1 bin; got {bins}.")
    confidence = batch.probs.max(axis=1)
    correct = (batch.probs.argmax(axis=1) == labels).astype(np.float64)

    edges = np.linspace(0.0, 1.0, bins + 1)
    index = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, bins - 1)
    acc_sum = np.bincount(index, weights=correct, minlength=bins)
    conf_sum = np.bincount(index, weights=confidence, minlength=bins)
    # sum_b |B_b|/N * |acc_b - conf_b| == sum_b |acc_sum_b - conf_sum_b| / N
    return float(np.abs(acc_sum - conf_sum).sum() / batch.size)


def brier(batch: ProbBatch) -> float:
    labels = batch.require_labels()
    onehot = np.zeros_like(batch.probs)
    onehot[np.arange(batch.size), labels] = 1.0
    return float(((batch.probs - onehot) ** 2).sum(axis=1).mean())
