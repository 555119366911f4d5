"""
Experiment configuration schema.

Rules:
- Every section forbids unknown keys, so a typo fails loudly instead of
  silently falling back to a default.
- List-valued keys accept comma-separated strings, which is what the flat
  `key = value` config format produces.
"""

from __future__ import annotations

from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from app.data.corruption import CorruptionKind
from app.data.datasets import SyntheticKind
from app.model.partition import Granularity
from app.model.spec import ModelSpec


def _split_csv(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


IntList = Annotated[list[int], BeforeValidator(_split_csv)]
FloatList = Annotated[list[float], BeforeValidator(_split_csv)]
StrList = Annotated[list[str], BeforeValidator(_split_csv)]

LossName = Literal["nll", "cel"]
MethodKind = Literal["standard", "deep_ensemble", "dca", "dcwa"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunSection(_Section):
    name: str = "default"
    method: MethodKind = "dca"


class ModelSection(_Section):
    # None: inferred from the training data.
    input_dim: int | None = None
    class_count: int | None = None
    hidden_width: int = 32
    trunks: IntList = Field(default_factory=lambda: [2, 2])

    def to_spec(self, *, input_dim: int, class_count: int) -> ModelSpec:
        return ModelSpec(
            input_dim=self.input_dim or input_dim,
            class_count=self.class_count or class_count,
            hidden_width=self.hidden_width,
            trunks=tuple(self.trunks),
        )


class DataSection(_Section):
    source: Literal["synthetic", "idx"] = "synthetic"
    # Dataset generation and corruption noise; training seeds are separate.
    seed: int = 0
    kind: SyntheticKind = "gaussian_clusters"
    class_count: int = 4
    train_per_class: int = 250
    test_per_class: int = 250
    noise: float = 1.0
    radius: float = 3.0

    ood_kind: SyntheticKind = "ring_uniform"
    ood_count: int = 1000
    ood_inner_radius: float = 6.0
    ood_outer_radius: float = 9.0

    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    ood_images: str | None = None
    ood_labels: str | None = None

    standardize: bool = True


class DcaSection(_Section):
    granularity: Annotated[Granularity, BeforeValidator(Granularity.parse)] = (
        Granularity.MODELWISE
    )
    n: int = 5

    @field_validator("n")
    @classmethod
    def _at_least_two_instances(cls, n: int) -> int:
        if n < 2:
            raise ValueError(f"n >= 2 required (a DCA bank needs two or more instances); got {n}")
        return n


class TrainConfig(_Section):
    base_epochs: int = Field(default=20, ge=1)
    lr: float = Field(default=0.05, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(default=64, ge=1)
    # "auto": CEL for DCA/DCWA except trunkwise, which trains with NLL.
    loss: Literal["nll", "cel", "auto"] = "auto"
    # Gradient passes per minibatch; None means s = n.
    inner_passes: int | None = Field(default=None, ge=1)
    lr_schedule: Literal["constant", "step"] = "step"
    lr_decay: float = Field(default=0.1, gt=0.0)
    lr_milestones: FloatList = Field(default_factory=lambda: [0.5, 0.75])
    kl_weight: float = Field(default=1.0, ge=0.0)
    # Average accumulated gradients over the s passes (False: sum them).
    average_gradients: bool = True
    seed: int | None = None

    @model_validator(mode="after")
    def _milestones_are_fractions(self) -> TrainConfig:
        if any(not 0.0 < m < 1.0 for m in self.lr_milestones):
            raise ValueError("lr_milestones are fractions of total epochs in (0, 1).")
        return self

    def resolved_loss(self, granularity: Granularity | None) -> LossName:
        if self.loss != "auto":
            return self.loss
        if granularity is None or granularity is Granularity.TRUNKWISE:
            return "nll"
        return "cel"

    def resolved_seed(self) -> int:
        return 0 if self.seed is None else self.seed


class EvalSection(_Section):
    ece_bins: int = Field(default=15, ge=1)
    # Proposals sampled per prediction for sub-model granularities.
    inference_proposals: int = Field(default=30, ge=1)
    aggregation: Literal["probability", "logit"] = "probability"
    ood_score: Literal["max_prob", "neg_entropy"] = "max_prob"
    proposal_seed: int = 12345


class HarnessSection(_Section):
    seeds: IntList = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    methods: StrList = Field(
        default_factory=lambda: [
            "standard",
            "deep_ensemble",
            "dca:modelwise",
            "dca:trunkwise",
            "dcwa:layerwise",
        ]
    )
    corruptions: Annotated[list[CorruptionKind], BeforeValidator(_split_csv)] = Field(
        default_factory=lambda: ["gaussian_noise", "input_blur", "pixel_dropout"]
    )
    severities: IntList = Field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    ablation_axis: Literal["granularity", "loss", "instance_count"] = "granularity"
    instance_counts: IntList = Field(default_factory=lambda: [2, 3, 4, 5])
    workers: int | None = Field(default=None, ge=1)


class ExperimentConfig(_Section):
    run: RunSection = Field(default_factory=RunSection)
    model: ModelSection = Field(default_factory=ModelSection)
    data: DataSection = Field(default_factory=DataSection)
    dca: DcaSection = Field(default_factory=DcaSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalSection = Field(default_factory=EvalSection)
    harness: HarnessSection = Field(default_factory=HarnessSection)
