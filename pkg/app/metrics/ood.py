"""
Out-of-distribution detection metrics.

In-domain samples are the positive class and scores are "higher means more
in-domain". AUROC is the Mann-Whitney statistic (ties count one half);
AUPR-in and AUPR-out are step-wise (non-interpolated) average precision,
the latter with outliers as positives and negated scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats
from sklearn import metrics as skm

from app.core.types import DataError, FloatArray
from app.metrics.reports import OodReport

TPR_TARGET = 0.95


@dataclass(frozen=True, eq=False)
class OodScoreSet:
    in_scores: FloatArray
    out_scores: FloatArray

    def __post_init__(self) -> None:
        for name in ("in_scores", "out_scores"):
            values = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if values.size == 0:
                raise DataError(f"OOD {name} is empty.")
            if not np.all(np.isfinite(values)):
                raise DataError(f"OOD {name} contains NaN or Inf.")
            object.__setattr__(self, name, values)

    def labelled(self) -> tuple[np.ndarray, FloatArray]:
        """(is_in_domain, score) over the concatenated sets."""
        y = np.concatenate([np.ones(self.in_scores.size), np.zeros(self.out_scores.size)])
        return y.astype(np.int64), np.concatenate([self.in_scores, self.out_scores])


def auroc(scores: OodScoreSet) -> float:
    n_in, n_out = scores.in_scores.size, scores.out_scores.size
    _, s = scores.labelled()
    ranks = stats.rankdata(s)
    u = ranks[:n_in].sum() - n_in * (n_in + 1) / 2.0
    return float(u / (n_in * n_out))


def roc_points(scores: OodScoreSet) -> pd.DataFrame:
    """Full ROC polyline from (0, 0) to (1, 1), one vertex per distinct score."""
    y, s = scores.labelled()
    fpr, tpr, thresholds = skm.roc_curve(y, s, drop_intermediate=False)
    return pd.DataFrame({"fpr": fpr, "tpr": tpr, "threshold": thresholds})


def ood_metrics(scores: OodScoreSet) -> OodReport:
    y, s = scores.labelled()
    fpr, tpr, _ = skm.roc_curve(y, s, drop_intermediate=False)

    # tpr and fpr are non-decreasing: the first vertex reaching the target
    # has the lowest FPR among those that do.
    fpr95 = float(fpr[np.argmax(tpr >= TPR_TARGET)])
    # Includes the accept-nothing / accept-everything endpoints (0.5 each).
    detection_error = float(np.min(0.5 * (fpr + (1.0 - tpr))))

    return OodReport(
        fpr_at_95_tpr=fpr95,
        detection_error=detection_error,
        auroc=auroc(scores),
        aupr_in=float(skm.average_precision_score(y, s)),
        aupr_out=float(skm.average_precision_score(1 - y, -s)),
    )
