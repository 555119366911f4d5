"""
Method registry.

Only registered method kinds can be run by the harness; each kind maps to
one trainer that turns (method, cell context) into a TrainedMethod.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Hashable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from app.config.schemas import ExperimentConfig, MethodKind
from app.data.sources import ExperimentData
from app.harness.methods import MethodSpec, TrainedMethod


class TrainingCache:
    """
    Trained artifacts shared between cells of one harness run.

    A DCWA cell and the DCA cell with the same granularity, loss, n and
    seed read the same trained bank; whichever cell asks first trains it.
    """

    def __init__(self) -> None:
        self._entries: dict[Hashable, Any] = {}
        self._locks: dict[Hashable, threading.Lock] = {}
        self._guard = threading.Lock()

    def get_or_create(self, key: Hashable, factory: Callable[[], Any]) -> Any:
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._entries:
                self._entries[key] = factory()
            return self._entries[key]

    def __contains__(self, key: Hashable) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class CellContext:
    cfg: ExperimentConfig
    data: ExperimentData
    seed: int
    cache: TrainingCache
    checkpoint_dir: Path | None = None


MethodTrainer = Callable[[MethodSpec, CellContext], TrainedMethod]


class MethodRegistry:
    def __init__(self) -> None:
        self._trainers: dict[MethodKind, MethodTrainer] = {}

    def register(self, kind: MethodKind, trainer: MethodTrainer) -> None:
        self._trainers[kind] = trainer

    def get(self, kind: MethodKind) -> MethodTrainer | None:
        return self._trainers.get(kind)

    def names(self) -> list[MethodKind]:
        return sorted(self._trainers.keys())
