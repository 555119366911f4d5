"""
Experiment-cell audit log.

Every cell (one method trained and evaluated under one seed) leaves one
append-only JSONL line: what ran, when, how it ended and how long it took.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from datetime import datetime

try:
    from datetime import UTC
except ImportError:  # Python < 3.11
    from datetime import timezone

    UTC = timezone.utc
from pathlib import Path


@dataclass(frozen=True)
class CellAuditEvent:
    timestamp: str
    run: str
    stage: str
    method: str
    seed: int
    status: str  # "success" | "error"
    error_type: str | None
    error_message: str | None
    duration_ms: int | None


class CellAuditLogger:
    def __init__(self, *, log_dir: Path) -> None:
        self.path = log_dir / "cells.jsonl"
        log_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def log(self, event: CellAuditEvent) -> None:
        line = json.dumps(asdict(event), ensure_ascii=False)
        with self._lock, self.path.open("a", encoding="utf-8") as handle:
            handle.write(line + "\n")

    def read(self) -> list[CellAuditEvent]:
        if not self.path.exists():
            return []
        with self.path.open(encoding="utf-8") as handle:
            return [CellAuditEvent(**json.loads(line)) for line in handle if line.strip()]


def now_iso() -> str:
    return datetime.now(UTC).isoformat()
