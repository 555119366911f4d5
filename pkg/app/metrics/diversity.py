"""
Diversity of per-member predictions on the same inputs.

For each input, with member distributions p^1..p^M:
    pairwise_kl        1/(M(M-1)) * sum_{i != j} KL(p^i || p^j)
    classwise_variance sum_c Var_m[p^m_c], Bessel-corrected (divide by M-1)
    js_divergence      1/M * sum_i KL(p^i || mean_j p^j)
each then averaged over the inputs.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy import special

from app.core.types import DataError, FloatArray
from app.metrics.predictions import PROB_FLOOR, ProbBatch, check_aligned
from app.metrics.reports import DiversityReport


def _kl_rows(p: FloatArray, q: FloatArray) -> FloatArray:
    """Per-row KL(p || q); 0 * log 0 = 0 and log q floored at log(1e-12)."""
    return (special.xlogy(p, p) - p * np.log(np.maximum(q, PROB_FLOOR))).sum(axis=-1)


def diversity(per_model: Sequence[ProbBatch]) -> DiversityReport:
    if len(per_model) < 2:
        raise DataError(f"Diversity needs >= 2 members; got {len(per_model)}.")
    check_aligned(per_model)
    members = np.stack([b.probs for b in per_model])
    m = members.shape[0]

    pairwise = np.zeros(members.shape[1])
    for i in range(m):
        for j in range(m):
            if i != j:
                pairwise += _kl_rows(members[i], members[j])
    pairwise /= m * (m - 1)

    variance = members.var(axis=0, ddof=1).sum(axis=1)

    mean = members.mean(axis=0)
    js = sum(_kl_rows(members[i], mean) for i in range(m)) / m

    return DiversityReport(
        pairwise_kl=max(float(pairwise.mean()), 0.0),
        classwise_variance=float(variance.mean()),
        js_divergence=max(float(js.mean()), 0.0),
        members=m,
    )
