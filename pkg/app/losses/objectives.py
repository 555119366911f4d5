"""
Negative log-likelihood and the consistency enforcing loss (CEL).

Both take row-wise log-probabilities [batch, C] and return the loss value
together with its gradient w.r.t. those log-probabilities; pushing that
gradient through LogSoftmax.backward gives the gradient w.r.t. the logits.

CEL = NLL + kl_weight * mean_b KL(p_ref || p), the forward KL with the
reference treated as data (no gradient into p_ref). Both terms average over
the batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from app.core.checks import assert_finite, assert_labels_in_range, assert_probability_rows
from app.core.types import DimensionError, FloatArray, IntArray

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
LOG_PROB_FLOOR = float(np.log(PROB_FLOOR))


@dataclass(frozen=True)
class ReferenceDistribution:
    probs: FloatArray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        assert_probability_rows(probs, tol=1e-9, what="reference distribution")
        # Detached: the loss never writes into or differentiates through it.
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_log_probs(cls, log_probs: FloatArray) -> ReferenceDistribution:
        return cls(np.exp(log_probs))


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: FloatArray
    nll: float
    kl: float
    # Log-probabilities that hit the floor (reported, never NaN).
    clamped: int


def _clamp(log_probs: FloatArray) -> tuple[FloatArray, np.ndarray]:
    live = log_probs > LOG_PROB_FLOOR
    return np.where(live, log_probs, LOG_PROB_FLOOR), live


def _check(log_probs: FloatArray, labels: IntArray) -> None:
    if log_probs.ndim != 2:
        raise DimensionError(f"log_probs must be [batch, C]; got shape {log_probs.shape}.")
    if labels.shape != (log_probs.shape[0],):
        raise DimensionError(
            f"labels have shape {labels.shape}; expected ({log_probs.shape[0]},)."
        )
    assert_finite(log_probs, what="log_probs")
    assert_labels_in_range(labels, log_probs.shape[1])


def nll(log_probs: FloatArray, labels: IntArray) -> LossResult:
    """Mean over the batch of -log p(y | x)."""
    labels = np.asarray(labels, dtype=np.int64)
    _check(log_probs, labels)
    batch = log_probs.shape[0]
    rows = np.arange(batch)

    clamped_lp, live = _clamp(log_probs)
    value = float(-clamped_lp[rows, labels].mean())

    grad = np.zeros_like(log_probs)
    grad[rows, labels] = np.where(live[rows, labels], -1.0 / batch, 0.0)
    clamped = int(np.count_nonzero(~live[rows, labels]))
    if clamped:
        logger.warning("NLL clamped %d log-probabilities at log(%.0e).", clamped, PROB_FLOOR)
    return LossResult(value=value, grad=grad, nll=value, kl=0.0, clamped=clamped)


def kl_divergence(ref: FloatArray, log_probs: FloatArray) -> tuple[FloatArray, int]:
    """
    Per-row forward KL(ref || p) = sum_c ref_c (log ref_c - log p_c).

    Terms with ref_c == 0 contribute 0; log p is floored at log(1e-12).
    """
    clamped_lp, live = _clamp(log_probs)
    per_row = (special.xlogy(ref, ref) - ref * clamped_lp).sum(axis=1)
    clamped = int(np.count_nonzero((~live) & (ref > 0.0)))
    return per_row, clamped


def cel(
    log_probs: FloatArray,
    labels: IntArray,
    ref: ReferenceDistribution,
    *,
    kl_weight: float = 1.0,
) -> LossResult:
    """NLL plus the forward KL from the detached reference prediction."""
    base = nll(log_probs, labels)
    if ref.probs.shape != log_probs.shape:
        raise DimensionError(
            f"Reference shape {ref.probs.shape} != log_probs shape {log_probs.shape}."
        )
    batch = log_probs.shape[0]

    per_row, clamped = kl_divergence(ref.probs, log_probs)
    kl = float(per_row.mean())

    _, live = _clamp(log_probs)
    grad = base.grad - kl_weight * np.where(live, ref.probs, 0.0) / batch
    if clamped:
        logger.warning("CEL clamped %d log-probabilities at log(%.0e).", clamped, PROB_FLOOR)
    return LossResult(
        value=base.value + kl_weight * kl,
        grad=grad,
        nll=base.nll,
        kl=kl,
        clamped=base.clamped + clamped,
    )
