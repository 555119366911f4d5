"""
Long-form result tables and their mean/std summaries.

Every experiment writes rows of (method, granularity, loss, n, seed,
coarse_grain_warning, [stage columns...], metric, value); summaries group by
everything except seed and report mean, sample std and the number of runs.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import pandas as pd

from app.harness.executor import CellOutcome
from app.harness.methods import TrainedMethod
from app.metrics.reports import MetricsReport

KEY_COLUMNS = ["method", "granularity", "loss", "n"]


def method_columns(trained: TrainedMethod) -> dict[str, Any]:
    m = trained.method
    return {
        "method": m.kind,
        "granularity": m.granularity.value if m.granularity is not None else "",
        "loss": m.loss,
        "n": m.n,
        "seed": trained.seed,
        "coarse_grain_warning": trained.coarse_grain_warning,
    }


def metric_rows(
    trained: TrainedMethod, values: dict[str, Any], **extra: Any
) -> list[dict[str, Any]]:
    base = {**method_columns(trained), **extra}
    return [{**base, "metric": k, "value": float(v)} for k, v in values.items()]


def report_rows(
    trained: TrainedMethod, report: MetricsReport, **extra: Any
) -> list[dict[str, Any]]:
    return metric_rows(trained, report.to_row(), **extra)


def long_form(rows: Iterable[dict[str, Any]], extra_columns: Sequence[str] = ()) -> pd.DataFrame:
    columns = [*KEY_COLUMNS, "seed", "coarse_grain_warning", *extra_columns, "metric", "value"]
    return pd.DataFrame(list(rows), columns=columns)


def summarize(table: pd.DataFrame, extra_columns: Sequence[str] = ()) -> pd.DataFrame:
    """Mean and sample std across seeds; a single run gets std 0 and `single_run`."""
    by = [*KEY_COLUMNS, *extra_columns, "metric"]
    if table.empty:
        return pd.DataFrame(columns=[*by, "mean", "std", "runs", "single_run"])
    grouped = table.groupby(by, sort=False)["value"]
    summary = grouped.agg(mean="mean", std="std", runs="count").reset_index()
    summary["single_run"] = summary["runs"] < 2
    summary["std"] = summary["std"].fillna(0.0)
    return summary


def failures_frame(outcomes: Sequence[CellOutcome]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "method": o.cell.method.label,
                "seed": o.cell.seed,
                "error_type": o.error_type,
                "error_message": o.error_message,
            }
            for o in outcomes
            if not o.ok
        ],
        columns=["method", "seed", "error_type", "error_message"],
    )


def write_table(table: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    return path


def write_summary_json(summary: pd.DataFrame, path: Path, **meta: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {**meta, "cells": json.loads(summary.to_json(orient="records"))}
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path
