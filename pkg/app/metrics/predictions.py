"""
Predictive distributions and how several of them are combined.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from app.core.checks import assert_probability_rows
from app.core.types import DataError, DimensionError, FloatArray, IntArray

AggregationMode = Literal["probability", "logit"]
OodScoreKind = Literal["max_prob", "neg_entropy"]

PROB_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ProbBatch:
    probs: FloatArray
    labels: IntArray | None = None

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        assert_probability_rows(probs, tol=1e-6, what="ProbBatch")
        object.__setattr__(self, "probs", probs)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (probs.shape[0],):
                raise DimensionError(
                    f"ProbBatch labels have shape {labels.shape}; expected ({probs.shape[0]},)."
                )
            if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
                raise DataError(f"ProbBatch labels must lie in [0, {probs.shape[1]}).")
            object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])

    @property
    def class_count(self) -> int:
        return int(self.probs.shape[1])

    def require_labels(self) -> IntArray:
        if self.labels is None:
            raise DataError("This metric needs labels; the ProbBatch has none.")
        return self.labels


def check_aligned(batches: Sequence[ProbBatch]) -> None:
    shape = batches[0].probs.shape
    for k, b in enumerate(batches[1:], start=1):
        if b.probs.shape != shape:
            raise DimensionError(
                f"Batch {k} has shape {b.probs.shape}; batch 0 has shape {shape}."
            )


def aggregate_predictions(
    per_proposal: Sequence[ProbBatch],
    *,
    mode: AggregationMode = "probability",
) -> ProbBatch:
    """
    Mean of the per-proposal distributions.

    mode="logit" averages floored log-probabilities and renormalizes
    instead (softmax of the mean log-probability).
    """
    if not per_proposal:
        raise DataError("aggregate_predictions needs at least one batch.")
    check_aligned(per_proposal)
    stacked = np.stack([b.probs for b in per_proposal])
    if mode == "probability":
        probs = stacked.mean(axis=0)
    else:
        probs = special.softmax(np.log(np.maximum(stacked, PROB_FLOOR)).mean(axis=0), axis=1)
    return ProbBatch(probs=probs, labels=per_proposal[0].labels)


def ood_score(batch: ProbBatch, kind: OodScoreKind = "max_prob") -> FloatArray:
    """Per-sample in-domain score; higher means more in-domain."""
    if kind == "max_prob":
        return batch.probs.max(axis=1)
    # Negated predictive entropy.
    return special.xlogy(batch.probs, batch.probs).sum(axis=1)
