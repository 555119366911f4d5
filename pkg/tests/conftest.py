from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from app.config.loader import build_config
from app.config.schemas import ExperimentConfig
from app.data.sources import ExperimentData, load_experiment_data
from app.model.spec import BuiltModel, ModelSpec, build_model

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec() -> ModelSpec:
    """One trunk of one block: stem, plain, fc0, fc1, head."""
    return ModelSpec(input_dim=2, class_count=3, hidden_width=4, trunks=(1,))


@pytest.fixture
def tiny_model(tiny_spec: ModelSpec) -> BuiltModel:
    return build_model(tiny_spec)


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    """Seconds-scale experiment: 3 Gaussian clusters, width 6, one trunk."""
    return build_config(
        {
            "model": {"hidden_width": "6", "trunks": "1"},
            "data": {
                "class_count": "3",
                "train_per_class": "20",
                "test_per_class": "20",
                "ood_count": "60",
                "radius": "4.0",
                "noise": "0.5",
            },
            "dca": {"granularity": "layerwise", "n": "2"},
            "train": {"base_epochs": "2", "batch_size": "16", "lr": "0.05", "seed": "0"},
            "eval": {"inference_proposals": "4"},
            "harness": {"seeds": "0", "severities": "0,5"},
        }
    )


@pytest.fixture
def small_data(small_cfg: ExperimentConfig) -> ExperimentData:
    return load_experiment_data(small_cfg.data)


@pytest.fixture
def smoke_config() -> Path:
    return CONFIGS / "smoke.conf"
