"""
Deep combinatorial weight averaging (DCWA).

Collapses a bank into one base-model parameterization: every slot becomes
the arithmetic mean of its n instance values. The result runs through the
ordinary single-model forward path; there is no post-averaging fixup.

Rules:
- Per slot, instance values are sorted before a left-to-right sum, so the
  result does not depend on instance order, bit for bit.
- Slots whose instances all agree return that value exactly.
- Coarse-grain banks are averaged too, but the result is flagged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.core.bank import DcaParameterBank
from app.core.checkpoint import write_single_model
from app.core.types import FloatArray
from app.model.partition import Granularity

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AveragedWeights:
    params: FloatArray
    granularity: Granularity
    n: int
    coarse_grain_warning: bool

    def save(self, path: Path) -> Path:
        """Standard single-model checkpoint (modelwise, n = 1)."""
        return write_single_model(path, self.params)


def average_weights(bank: DcaParameterBank) -> AveragedWeights:
    ordered = np.sort(bank.values, axis=0)
    total = ordered[0].copy()
    for row in ordered[1:]:
        total += row
    mean = total / bank.n

    uniform = ordered[0] == ordered[-1]
    params = np.where(uniform, ordered[0], mean)

    coarse = not bank.granularity.is_fine
    if coarse:
        logger.warning(
            "Averaging a %s bank: weight averaging is meant for fine-grain "
            "(neuronwise/layerwise) banks and degrades on coarser ones.",
            bank.granularity.value,
        )
    return AveragedWeights(
        params=params,
        granularity=bank.granularity,
        n=bank.n,
        coarse_grain_warning=coarse,
    )
