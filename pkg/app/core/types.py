"""
Shared types and exceptions.

Every failure the library can report is a DcaError subclass so the CLI can
map it to an exit code, and the harness can record it per cell without
swallowing programming errors.
"""

from __future__ import annotations

from pathlib import Path
from typing import NewType

import numpy as np
import numpy.typing as npt


FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

Seed = NewType("Seed", int)


class DcaError(Exception):
    """Base class for library errors."""

    exit_code: int = 1


class ConfigError(DcaError):
    """Configuration is invalid (unknown key, out-of-range value, ...)."""

    exit_code = 1


class RunLockedError(ConfigError):
    """Another invocation holds the lock on the target output directory."""


class DataError(DcaError):
    """Input data violates its contract (labels out of range, empty sets, ...)."""

    exit_code = 2


class FormatError(DataError):
    """A binary file (IDX, checkpoint) is malformed."""

    def __init__(self, message: str, *, offset: int | None = None) -> None:
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DimensionError(DataError):
    """Array shapes or lengths disagree."""


class ProposalError(DataError):
    """A proposal does not fit the bank it is applied to."""


class NumericError(DcaError):
    """NaN/Inf appeared in a forward pass, a loss or a gradient."""

    exit_code = 3

    def __init__(self, message: str, *, checkpoint: Path | None = None) -> None:
        self.checkpoint = checkpoint
        if checkpoint is not None:
            message = f"{message}; last good checkpoint: {checkpoint}"
        super().__init__(message)


class StateError(DcaError):
    """An operation was called out of order (e.g. backward before forward)."""
