from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

CSV_COLUMNS = ("epoch", "loss", "accuracy", "seconds")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    seconds: float
    lr: float


@dataclass
class TrainLog:
    """One record per completed epoch plus the final checkpoint, if written."""

    method: str
    records: list[EpochRecord] = field(default_factory=list)
    checkpoint: Path | None = None
    forward_passes: int = 0
    steps: int = 0

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    @property
    def epochs(self) -> int:
        return len(self.records)

    @property
    def initial_loss(self) -> float:
        return self.records[0].loss

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.epoch, r.loss, r.accuracy, r.seconds) for r in self.records],
            columns=list(CSV_COLUMNS),
        )

    def write_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path
