"""
Datasets and the desk-scale synthetic generators.

A Dataset is immutable once created: its arrays are marked read-only and
every transformation (standardization, corruption) returns a new one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from app.core.checks import assert_finite, assert_labels_in_range, assert_shape
from app.core.types import ConfigError, DataError, FloatArray, IntArray

Split = Literal["train", "test"]
SyntheticKind = Literal["gaussian_clusters", "two_spirals", "ring_uniform"]


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: FloatArray
    labels: IntArray
    class_count: int
    split: Split
    provenance: str
    # (rows, cols) when inputs are flattened images, for 2-D corruptions.
    image_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        inputs = np.array(self.inputs, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        assert_shape(inputs, (None, None), what="dataset inputs")
        if inputs.shape[0] == 0:
            raise DataError(f"Dataset {self.provenance!r} is empty.")
        assert_shape(labels, (inputs.shape[0],), what="dataset labels")
        assert_finite(inputs, what="dataset inputs")
        assert_labels_in_range(labels, self.class_count)
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])

    def with_inputs(self, inputs: FloatArray, *, provenance: str | None = None) -> Dataset:
        return replace(self, inputs=inputs, provenance=provenance or self.provenance)


@dataclass(frozen=True)
class DataSplits:
    train: Dataset
    test: Dataset


@dataclass(frozen=True)
class SyntheticParams:
    class_count: int = 4
    train_per_class: int = 250
    test_per_class: int = 250
    noise: float = 1.0
    radius: float = 3.0
    inner_radius: float = 6.0
    outer_radius: float = 9.0


def _gaussian_clusters(p: SyntheticParams, per_class: int, rng: np.random.Generator):
    angles = 2.0 * np.pi * np.arange(p.class_count) / p.class_count
    centers = p.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = np.repeat(np.arange(p.class_count), per_class)
    inputs = centers[labels] + p.noise * rng.standard_normal((labels.size, 2))
    return inputs, labels


def _two_spirals(p: SyntheticParams, per_class: int, rng: np.random.Generator):
    # One arm per class, arms rotated evenly; 1.5 turns out to `radius`.
    labels = np.repeat(np.arange(p.class_count), per_class)
    t = np.sqrt(rng.uniform(0.0, 1.0, size=labels.size))
    theta = 3.0 * np.pi * t + 2.0 * np.pi * labels / p.class_count
    r = p.radius * t
    inputs = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    inputs += p.noise * rng.standard_normal(inputs.shape)
    return inputs, labels


def _ring_uniform(p: SyntheticParams, per_class: int, rng: np.random.Generator):
    # Uniform over the annulus; labels are the angular sector, which only
    # matters to keep the dataset well-formed (it serves as the outlier set).
    count = per_class * p.class_count
    r = np.sqrt(rng.uniform(p.inner_radius**2, p.outer_radius**2, size=count))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
    inputs = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    labels = np.minimum(
        (theta / (2.0 * np.pi) * p.class_count).astype(np.int64), p.class_count - 1
    )
    return inputs, labels


_GENERATORS = {
    "gaussian_clusters": _gaussian_clusters,
    "two_spirals": _two_spirals,
    "ring_uniform": _ring_uniform,
}


def make_synthetic(kind: SyntheticKind, params: SyntheticParams, seed: int) -> DataSplits:
    """Train and test sets drawn from disjoint child streams of one seed."""
    if kind not in _GENERATORS:
        raise ConfigError(f"Unknown synthetic dataset kind {kind!r}.")
    if params.class_count < 2:
        raise ConfigError(f"data.class_count must be >= 2; got {params.class_count}.")
    if params.train_per_class < 1 or params.test_per_class < 1:
        raise ConfigError("Synthetic datasets need >= 1 sample per class in each split.")
    if params.noise < 0.0:
        raise ConfigError(f"data.noise must be >= 0; got {params.noise}.")

    generate = _GENERATORS[kind]
    train_ss, test_ss = np.random.SeedSequence(seed).spawn(2)
    splits = []
    for split, ss, per_class in (
        ("train", train_ss, params.train_per_class),
        ("test", test_ss, params.test_per_class),
    ):
        rng = np.random.default_rng(ss)
        inputs, labels = generate(params, per_class, rng)
        order = rng.permutation(labels.size)
        splits.append(
            Dataset(
                inputs=inputs[order],
                labels=labels[order],
                class_count=params.class_count,
                split=split,
                provenance=f"synthetic:{kind}(seed={seed})",
            )
        )
    return DataSplits(train=splits[0], test=splits[1])
