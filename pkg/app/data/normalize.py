"""
Input standardization.

Rule: statistics come from the training split only; test, shifted and
outlier sets reuse them. Standardization is a pure function
(Dataset -> Dataset).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.core.types import FloatArray
from app.data.datasets import Dataset


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: FloatArray
    std: FloatArray

    @classmethod
    def fit(cls, train: Dataset) -> Standardizer:
        mean = train.inputs.mean(axis=0)
        std = train.inputs.std(axis=0)
        # Constant features (e.g. always-black border pixels) pass through centred.
        std = np.where(std > 0.0, std, 1.0)
        return cls(mean=mean, std=std)

    def apply(self, data: Dataset) -> Dataset:
        return data.with_inputs((data.inputs - self.mean) / self.std)


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    scaler = Standardizer.fit(train)
    return (scaler.apply(train), *(scaler.apply(d) for d in others))
