"""
Output-directory lock.

Concurrent invocations must write to distinct run directories. The lock is
a file created with O_EXCL; a busy lock is retried a few times (a previous
run may be just finishing) and then reported as RunLockedError.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from app.config import Settings
from app.core.types import RunLockedError

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"


def _create(path: Path) -> None:
    fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
    finally:
        os.close(fd)


@contextmanager
def run_lock(run_dir: Path, settings: Settings) -> Iterator[Path]:
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / LOCK_NAME
    acquire = retry(
        retry=retry_if_exception_type(FileExistsError),
        stop=stop_after_attempt(max(1, settings.lock_retry_attempts)),
        wait=wait_fixed(settings.lock_retry_wait_seconds),
        reraise=True,
    )(_create)
    try:
        acquire(path)
    except FileExistsError as e:
        holder = path.read_text(encoding="ascii", errors="replace").strip() or "?"
        raise RunLockedError(
            f"Output directory {run_dir} is locked by another run (pid {holder}); "
            f"use a different run name or remove {path} if that run is gone."
        ) from e
    logger.debug("Acquired %s", path)
    try:
        yield path
    finally:
        path.unlink(missing_ok=True)
