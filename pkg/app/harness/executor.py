from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from app.config.schemas import ExperimentConfig
from app.core.types import ConfigError, DcaError
from app.data.sources import ExperimentData
from app.harness.audit import CellAuditEvent, CellAuditLogger, now_iso
from app.harness.methods import MethodSpec, TrainedMethod
from app.harness.registry import CellContext, MethodRegistry, TrainingCache

logger = logging.getLogger(__name__)

CellEvaluator = Callable[[TrainedMethod], Any]


@dataclass(frozen=True)
class Cell:
    method: MethodSpec
    seed: int


@dataclass(frozen=True)
class CellOutcome:
    cell: Cell
    trained: TrainedMethod | None
    result: Any
    error_type: str | None
    error_message: str | None
    duration_ms: int
    error: DcaError | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error_type is None


class CellExecutor:
    """
    Trains and evaluates experiment cells.

    Library errors (DcaError) are captured per cell so one diverging run
    does not take the rest of the table down; anything else is a bug and
    propagates. Outcomes come back in the order the cells were given,
    whatever order they finished in.
    """

    def __init__(
        self,
        *,
        registry: MethodRegistry,
        audit_logger: CellAuditLogger | None = None,
        workers: int = 1,
        cache: TrainingCache | None = None,
        checkpoint_dir: Path | None = None,
        run_name: str = "default",
    ) -> None:
        self._registry = registry
        self._audit = audit_logger
        self.workers = max(1, workers)
        self.cache = cache or TrainingCache()
        self.checkpoint_dir = checkpoint_dir
        self.run_name = run_name

    def execute(
        self,
        cell: Cell,
        *,
        cfg: ExperimentConfig,
        data: ExperimentData,
        stage: str,
        evaluate: CellEvaluator | None = None,
    ) -> CellOutcome:
        start = time.perf_counter()
        try:
            trainer = self._registry.get(cell.method.kind)
            if trainer is None:
                raise ConfigError(f"Method kind not registered: {cell.method.kind}")
            ctx = CellContext(
                cfg=cfg, data=data, seed=cell.seed,
                cache=self.cache, checkpoint_dir=self.checkpoint_dir,
            )
            trained = trainer(cell.method, ctx)
            result = evaluate(trained) if evaluate is not None else None
        except DcaError as e:
            outcome = CellOutcome(
                cell=cell, trained=None, result=None,
                error_type=type(e).__name__, error_message=str(e),
                duration_ms=_ms_since(start), error=e,
            )
            logger.error("Cell %s seed=%d failed: %s", cell.method.label, cell.seed, e)
        else:
            outcome = CellOutcome(
                cell=cell, trained=trained, result=result,
                error_type=None, error_message=None,
                duration_ms=_ms_since(start),
            )
        self._log_event(outcome, stage)
        return outcome

    def run(
        self,
        cells: Sequence[Cell],
        *,
        cfg: ExperimentConfig,
        data: ExperimentData,
        stage: str,
        evaluate: CellEvaluator | None = None,
    ) -> list[CellOutcome]:
        def one(cell: Cell) -> CellOutcome:
            return self.execute(cell, cfg=cfg, data=data, stage=stage, evaluate=evaluate)

        if self.workers == 1 or len(cells) <= 1:
            return [one(c) for c in cells]
        with ThreadPoolExecutor(max_workers=min(self.workers, len(cells))) as pool:
            return list(pool.map(one, cells))

    def _log_event(self, outcome: CellOutcome, stage: str) -> None:
        if not self._audit:
            return
        self._audit.log(
            CellAuditEvent(
                timestamp=now_iso(),
                run=self.run_name,
                stage=stage,
                method=outcome.cell.method.label,
                seed=outcome.cell.seed,
                status="success" if outcome.ok else "error",
                error_type=outcome.error_type,
                error_message=outcome.error_message,
                duration_ms=outcome.duration_ms,
            )
        )


def _ms_since(start: float) -> int:
    return int((time.perf_counter() - start) * 1000)
