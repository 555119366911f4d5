"""
Dense tensors and the softmax family.

A Tensor is a float64 array plus an optional gradient slot. Everything in
the package computes in float64: the networks are small and the
finite-difference gradient checks need the headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from app.core.checks import assert_finite
from app.core.types import DimensionError, FloatArray


@dataclass
class Tensor:
    data: FloatArray
    grad: FloatArray | None = None

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.grad is not None and self.grad.shape != self.data.shape:
            raise DimensionError(
                f"grad shape {self.grad.shape} != data shape {self.data.shape}."
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def check_finite(self, what: str = "tensor") -> None:
        assert_finite(self.data, what=what)
        if self.grad is not None:
            assert_finite(self.grad, what=f"{what}.grad")

    @classmethod
    def zeros(cls, *shape: int) -> Tensor:
        return cls(np.zeros(shape, dtype=np.float64))


def _logits_array(logits: Tensor | FloatArray) -> FloatArray:
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    if data.ndim < 1 or data.shape[-1] < 2:
        raise DimensionError(f"Need at least 2 classes in the last axis; got {data.shape}.")
    assert_finite(data, what="logits")
    return data


def log_softmax(logits: Tensor | FloatArray) -> FloatArray:
    """Row-wise log-softmax via log-sum-exp (never log of softmax)."""
    return special.log_softmax(_logits_array(logits), axis=-1)


def softmax(logits: Tensor | FloatArray) -> FloatArray:
    """Row-wise softmax with max subtraction; rows sum to 1 within 1e-12."""
    return special.softmax(_logits_array(logits), axis=-1)
