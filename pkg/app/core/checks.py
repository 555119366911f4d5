"""
Guard checks shared across modules.

Key rule:
- Contracts are enforced in code at module boundaries, with the typed error
  the CLI expects (NumericError -> exit 3, DataError -> exit 2, ...).
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from app.core.types import (
    ConfigError,
    DataError,
    DimensionError,
    FloatArray,
    NumericError,
)


def assert_finite(values: FloatArray, *, what: str) -> None:
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise NumericError(f"{what} contains {bad} non-finite value(s).")


def assert_shape(values: np.ndarray, shape: Sequence[int | None], *, what: str) -> None:
    """`None` in `shape` matches any extent."""
    if values.ndim != len(shape) or any(
        want is not None and got != want for got, want in zip(values.shape, shape)
    ):
        raise DimensionError(
            f"{what} has shape {tuple(values.shape)}, expected {tuple(shape)}."
        )


def assert_labels_in_range(labels: np.ndarray, class_count: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise DataError(
            f"Labels must lie in [0, {class_count}); "
            f"got range [{labels.min()}, {labels.max()}]."
        )


def assert_probability_rows(probs: FloatArray, *, tol: float, what: str) -> None:
    if probs.ndim != 2:
        raise DimensionError(f"{what} must be 2-D [N, C]; got {probs.ndim}-D.")
    assert_finite(probs, what=what)
    if np.any(probs < 0.0) or np.any(probs > 1.0 + tol):
        raise DataError(f"{what} has entries outside [0, 1].")
    sums = probs.sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if worst > tol:
        raise DataError(f"{what} rows must sum to 1 (worst deviation {worst:.3g}).")


def assert_positive(value: int, *, what: str, minimum: int = 1) -> None:
    if value < minimum:
        raise ConfigError(f"{what} must be >= {minimum}; got {value}.")
