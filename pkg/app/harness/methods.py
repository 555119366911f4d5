"""
Methods under comparison and the predictors they produce.

A method is named on the config/CLI as `kind[:granularity[:loss]]`, e.g.
`standard`, `deep_ensemble`, `dca:modelwise`, `dcwa:layerwise:nll`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from app.autodiff.tensor import softmax
from app.config.schemas import ExperimentConfig, LossName, MethodKind
from app.core.bank import (
    DcaParameterBank,
    Proposal,
    assemble,
    count_proposals,
    enumerate_proposals,
    sample_proposal,
)
from app.core.types import ConfigError, FloatArray
from app.metrics import ProbBatch, aggregate_predictions
from app.metrics.predictions import AggregationMode
from app.model.partition import Granularity
from app.model.spec import BuiltModel
from app.training.run_log import TrainLog

_KINDS: tuple[MethodKind, ...] = ("standard", "deep_ensemble", "dca", "dcwa")


@dataclass(frozen=True)
class MethodSpec:
    kind: MethodKind
    granularity: Granularity | None
    loss: LossName
    n: int

    @property
    def label(self) -> str:
        if self.kind == "standard":
            return "standard"
        if self.kind == "deep_ensemble":
            return f"deep_ensemble:n{self.n}"
        assert self.granularity is not None
        return f"{self.kind}:{self.granularity.value}:{self.loss}:n{self.n}"

    @classmethod
    def parse(cls, text: str, cfg: ExperimentConfig, *, n: int | None = None) -> MethodSpec:
        parts = [p.strip() for p in text.split(":")]
        kind = parts[0]
        if kind not in _KINDS:
            raise ConfigError(f"Unknown method {text!r}; kinds are {', '.join(_KINDS)}.")
        n = n or cfg.dca.n
        if kind == "standard":
            return cls(kind="standard", granularity=None, loss="nll", n=1)
        if kind == "deep_ensemble":
            return cls(kind="deep_ensemble", granularity=None, loss="nll", n=n)
        if len(parts) > 3:
            raise ConfigError(f"Method {text!r} has too many ':'-separated fields.")
        granularity = cfg.dca.granularity
        if len(parts) > 1:
            try:
                granularity = Granularity(Granularity.parse(parts[1]))
            except ValueError as e:
                raise ConfigError(f"Method {text!r}: unknown granularity {parts[1]!r}.") from e
        if len(parts) > 2:
            if parts[2] not in ("nll", "cel"):
                raise ConfigError(f"Method {text!r}: loss must be nll or cel.")
            loss: LossName = parts[2]  # type: ignore[assignment]
        else:
            loss = cfg.train.resolved_loss(granularity)
        return cls(kind=kind, granularity=granularity, loss=loss, n=n)  # type: ignore[arg-type]


class Predictor(Protocol):
    def predict(self, inputs: FloatArray, labels: np.ndarray | None = None) -> ProbBatch: ...


class SingleModel:
    """One base-model parameterization: standard training, DCWA, one member."""

    def __init__(self, model: BuiltModel, params: FloatArray) -> None:
        self.model = model
        self.params = np.asarray(params, dtype=np.float64)
        self._graph = model.graph()

    def predict(self, inputs: FloatArray, labels: np.ndarray | None = None) -> ProbBatch:
        return ProbBatch(softmax(self._graph.forward(self.params, inputs)), labels)


class ProposalEnsemble:
    """
    Averages the predictions of several proposals of a bank.

    Every proposal is enumerated once when the bank has at most
    `proposals` of them (always true for modelwise banks and deep
    ensembles); otherwise `proposals` are sampled from a generator seeded
    with `proposal_seed`, recreated per call so repeated predictions use
    the same proposals.
    """

    def __init__(
        self,
        bank: DcaParameterBank,
        *,
        proposals: int,
        proposal_seed: int,
        mode: AggregationMode = "probability",
    ) -> None:
        self.bank = bank
        self.proposals = proposals
        self.proposal_seed = proposal_seed
        self.mode = mode
        self._graph = bank.partition.model.graph()

    def proposal_list(self) -> list[Proposal]:
        count = count_proposals(self.bank)
        if not count.overflow and count.value is not None and count.value <= self.proposals:
            return list(enumerate_proposals(self.bank))
        rng = np.random.default_rng(self.proposal_seed)
        return [sample_proposal(self.bank, rng) for _ in range(self.proposals)]

    def predict(self, inputs: FloatArray, labels: np.ndarray | None = None) -> ProbBatch:
        batches = [
            ProbBatch(softmax(self._graph.forward(assemble(self.bank, p), inputs)), labels)
            for p in self.proposal_list()
        ]
        return aggregate_predictions(batches, mode=self.mode)

    def members(self) -> list[SingleModel]:
        """Whole-model members of a modelwise bank, evaluated alone."""
        if self.bank.granularity is not Granularity.MODELWISE:
            raise ConfigError(
                f"Members are only defined for modelwise banks; got {self.bank.granularity.value}."
            )
        model = self.bank.partition.model
        return [SingleModel(model, self.bank.values[i]) for i in range(self.bank.n)]


@dataclass
class TrainedMethod:
    method: MethodSpec
    seed: int
    predictor: Predictor
    logs: list[TrainLog] = field(default_factory=list)
    bank: DcaParameterBank | None = None
    coarse_grain_warning: bool = False
