"""
Build the train / test / outlier datasets an experiment runs on.

Responsibilities:
- Pick the source (synthetic generator or IDX files) from the data config.
- Standardize every set with statistics fitted on the training split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from app.config.schemas import DataSection
from app.core.types import ConfigError
from app.data.datasets import Dataset, SyntheticParams, make_synthetic
from app.data.idx import load_idx
from app.data.normalize import Standardizer

logger = logging.getLogger(__name__)

# Offset for the outlier generator's seed, so it never reuses the in-domain streams.
_OOD_SEED_OFFSET = 1


@dataclass(frozen=True)
class ExperimentData:
    train: Dataset
    test: Dataset
    ood: Dataset | None = None

    @property
    def class_count(self) -> int:
        return self.train.class_count

    @property
    def input_dim(self) -> int:
        return self.train.dim


def _synthetic(section: DataSection) -> ExperimentData:
    params = SyntheticParams(
        class_count=section.class_count,
        train_per_class=section.train_per_class,
        test_per_class=section.test_per_class,
        noise=section.noise,
        radius=section.radius,
    )
    splits = make_synthetic(section.kind, params, section.seed)
    ood_params = SyntheticParams(
        class_count=section.class_count,
        train_per_class=1,
        test_per_class=max(1, section.ood_count // section.class_count),
        noise=section.noise,
        radius=section.radius,
        inner_radius=section.ood_inner_radius,
        outer_radius=section.ood_outer_radius,
    )
    ood = make_synthetic(section.ood_kind, ood_params, section.seed + _OOD_SEED_OFFSET).test
    return ExperimentData(train=splits.train, test=splits.test, ood=ood)


def _required(value: str | None, key: str) -> Path:
    if not value:
        raise ConfigError(f"data.source = idx requires data.{key}.")
    return Path(value)


def _idx(section: DataSection) -> ExperimentData:
    train = load_idx(
        _required(section.train_images, "train_images"),
        _required(section.train_labels, "train_labels"),
        split="train",
    )
    test = load_idx(
        _required(section.test_images, "test_images"),
        _required(section.test_labels, "test_labels"),
        split="test",
        class_count=train.class_count,
    )
    ood = None
    if section.ood_images:
        ood = load_idx(
            Path(section.ood_images),
            _required(section.ood_labels, "ood_labels"),
            split="test",
        )
    return ExperimentData(train=train, test=test, ood=ood)


def load_experiment_data(section: DataSection) -> ExperimentData:
    data = _synthetic(section) if section.source == "synthetic" else _idx(section)
    logger.info(
        "Loaded data: train=%d test=%d ood=%s dim=%d classes=%d",
        data.train.size, data.test.size,
        data.ood.size if data.ood is not None else "none",
        data.input_dim, data.class_count,
    )
    if not section.standardize:
        return data
    scaler = Standardizer.fit(data.train)
    return ExperimentData(
        train=scaler.apply(data.train),
        test=scaler.apply(data.test),
        ood=scaler.apply(data.ood) if data.ood is not None else None,
    )
