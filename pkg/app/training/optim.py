"""
SGD with momentum over a DCA bank, and the learning-rate schedule.

Rules:
- Only (instance, component) pairs touched by a scatter in this step are
  updated; every other weight and velocity entry is left bit-identical.
- Velocity persists across steps and does not decay while an instance is
  idle.
- The update is computed out of place and committed only when finite, so a
  failing step leaves the bank in its last good state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from app.core.bank import DcaParameterBank, GradientAccumulator
from app.core.checks import assert_finite
from app.core.types import ConfigError, StateError


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    total_epochs: int
    kind: Literal["constant", "step"] = "step"
    decay: float = 0.1
    # Fractions of total_epochs at which the rate is multiplied by `decay`.
    milestones: tuple[float, ...] = (0.5, 0.75)

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1; got {self.total_epochs}.")

    def milestone_epochs(self) -> tuple[int, ...]:
        return tuple(int(round(m * self.total_epochs)) for m in self.milestones)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index."""
        if self.kind == "constant":
            return self.base_lr
        passed = sum(1 for m in self.milestone_epochs() if epoch >= m)
        return self.base_lr * self.decay**passed


def sgd_momentum_update(
    bank: DcaParameterBank,
    accumulator: GradientAccumulator,
    *,
    lr: float,
    momentum: float,
    average: bool = True,
) -> int:
    """
    v <- momentum * v + g ; w <- w - lr * v   on touched slots only.

    With `average`, g is the accumulated gradient divided by the number of
    passes. Returns the number of touched (instance, component) pairs.
    """
    if accumulator.passes == 0:
        raise StateError("Optimizer step with no accumulated gradient passes.")
    mask = accumulator.touched[:, bank.partition.component_of]
    grads = accumulator.grads[mask]
    if average:
        grads = grads / accumulator.passes

    velocity = momentum * bank.velocity[mask] + grads
    values = bank.values[mask] - lr * velocity
    assert_finite(values, what="updated parameters")

    bank.velocity[mask] = velocity
    bank.values[mask] = values
    return int(np.count_nonzero(accumulator.touched))
