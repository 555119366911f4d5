"""
Test-time corruptions for distributional shift.

Five severities per kind, each with a fixed, strictly increasing parameter;
severity 0 is the identity (the in-domain case). Corruptions act on
standardized inputs and never touch labels or dataset size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from app.core.types import ConfigError
from app.data.datasets import Dataset

CorruptionKind = Literal["gaussian_noise", "input_blur", "pixel_dropout"]

MAX_SEVERITY = 5

# Index = severity - 1.
GAUSSIAN_SIGMA = (0.05, 0.1, 0.2, 0.3, 0.5)
BLUR_WINDOW = (3, 5, 7, 9, 11)
DROPOUT_RATE = (0.1, 0.2, 0.3, 0.4, 0.6)

_KIND_IDS = {"gaussian_noise": 0, "input_blur": 1, "pixel_dropout": 2}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    severity: int

    def __post_init__(self) -> None:
        if self.kind not in _KIND_IDS:
            raise ConfigError(f"Unknown corruption kind {self.kind!r}.")
        if not 0 <= self.severity <= MAX_SEVERITY:
            raise ConfigError(
                f"Corruption severity must lie in [0, {MAX_SEVERITY}]; got {self.severity}."
            )

    @property
    def parameter(self) -> float:
        if self.severity == 0:
            return 0.0
        table = {
            "gaussian_noise": GAUSSIAN_SIGMA,
            "input_blur": BLUR_WINDOW,
            "pixel_dropout": DROPOUT_RATE,
        }[self.kind]
        return float(table[self.severity - 1])


def _blur(data: Dataset, window: int) -> np.ndarray:
    if data.image_shape is not None:
        rows, cols = data.image_shape
        images = data.inputs.reshape(data.size, rows, cols)
        blurred = ndimage.uniform_filter(images, size=(1, window, window), mode="nearest")
        return blurred.reshape(data.size, rows * cols)
    # Plain feature vectors: mean filter along the feature axis.
    return ndimage.uniform_filter1d(data.inputs, size=window, axis=1, mode="nearest")


def corrupt(data: Dataset, spec: CorruptionSpec, seed: int) -> Dataset:
    if spec.severity == 0:
        return data

    rng = np.random.default_rng([seed, _KIND_IDS[spec.kind], spec.severity])
    if spec.kind == "gaussian_noise":
        inputs = data.inputs + spec.parameter * rng.standard_normal(data.inputs.shape)
    elif spec.kind == "input_blur":
        inputs = _blur(data, int(spec.parameter))
    else:
        keep = rng.uniform(size=data.inputs.shape) >= spec.parameter
        # Zero is the per-feature mean after standardization.
        inputs = np.where(keep, data.inputs, 0.0)

    return data.with_inputs(
        inputs, provenance=f"{data.provenance}+{spec.kind}@{spec.severity}"
    )
