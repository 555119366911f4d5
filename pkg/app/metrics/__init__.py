from app.metrics.calibration import DEFAULT_ECE_BINS, accuracy, brier, ece, nll
from app.metrics.diversity import diversity
from app.metrics.ood import OodScoreSet, auroc, ood_metrics, roc_points
from app.metrics.predictions import ProbBatch, aggregate_predictions, ood_score
from app.metrics.reports import DiversityReport, MetricsReport, OodReport


def evaluate(
    batch: ProbBatch,
    *,
    bins: int = DEFAULT_ECE_BINS,
    ood: OodScoreSet | None = None,
) -> MetricsReport:
    return MetricsReport(
        accuracy=accuracy(batch),
        nll=nll(batch),
        ece=ece(batch, bins),
        brier=brier(batch),
        ece_bins=bins,
        ood=ood_metrics(ood) if ood is not None else None,
    )


__all__ = [
    "DiversityReport",
    "MetricsReport",
    "OodReport",
    "OodScoreSet",
    "ProbBatch",
    "accuracy",
    "aggregate_predictions",
    "auroc",
    "brier",
    "diversity",
    "ece",
    "evaluate",
    "nll",
    "ood_metrics",
    "ood_score",
    "roc_points",
]
