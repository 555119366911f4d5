"""
Serializable metric reports (JSON and one-row CSV).

Field names are part of the output contract; downstream tables key on them.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field


class _Report(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    def to_row(self) -> dict[str, Any]:
        return self.model_dump()

    def write_json(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(), indent=2), encoding="utf-8")
        return path

    def write_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame([self.to_row()]).to_csv(path, index=False)
        return path


class OodReport(_Report):
    fpr_at_95_tpr: float = Field(ge=0.0, le=1.0)
    detection_error: float = Field(ge=0.0, le=0.5 + 1e-12)
    auroc: float = Field(ge=0.0, le=1.0)
    aupr_in: float = Field(ge=0.0, le=1.0)
    aupr_out: float = Field(ge=0.0, le=1.0)


class MetricsReport(_Report):
    accuracy: float = Field(ge=0.0, le=1.0)
    nll: float = Field(ge=0.0)
    ece: float = Field(ge=0.0, le=1.0)
    brier: float = Field(ge=0.0, le=2.0)
    ece_bins: int = 15
    ood: OodReport | None = None

    def to_row(self) -> dict[str, Any]:
        row = self.model_dump(exclude={"ood"})
        if self.ood is not None:
            row.update(self.ood.model_dump())
        return row


class DiversityReport(_Report):
    pairwise_kl: float = Field(ge=0.0)
    classwise_variance: float = Field(ge=0.0)
    js_divergence: float = Field(ge=0.0)
    members: int = Field(ge=2)
