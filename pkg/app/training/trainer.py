"""
Training loops: joint DCA training, standard training and deep ensembles.

Per minibatch, DCA runs `s` gradient passes, each on a freshly sampled
proposal, scatters every pass's gradient into the instances that proposal
selected, then applies one SGD-with-momentum update to the touched slots.
With the consistency enforcing loss, one extra no-gradient pass on another
fresh proposal produces the first reference prediction; pass i then uses
the prediction of pass i-1 as its reference.

Standard training is the same loop over a one-instance modelwise bank with
one pass per minibatch and NLL, so both paths share every line of numerics.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.autodiff.graph import ComputeGraph
from app.autodiff.ops import LogSoftmax
from app.config.schemas import LossName, TrainConfig
from app.core.bank import (
    DcaParameterBank,
    Proposal,
    assemble,
    init_instances,
    sample_proposal,
    scatter_gradients,
)
from app.core.checkpoint import write_checkpoint
from app.core.types import DataError, DimensionError, FloatArray, NumericError
from app.data.datasets import Dataset
from app.losses.objectives import LossResult, ReferenceDistribution, cel, nll
from app.model.partition import Granularity
from app.model.spec import BuiltModel, ModelSpec, build_model
from app.training.optim import LrSchedule, sgd_momentum_update
from app.training.run_log import EpochRecord, TrainLog

logger = logging.getLogger(__name__)

ProposalSampler = Callable[[DcaParameterBank, np.random.Generator], Proposal]

# Mixed into the run seed so data/proposal streams never coincide with the
# instance initialization streams drawn from the bare seed.
_TRAIN_STREAM = 0x7472


@dataclass(frozen=True)
class StepResult:
    loss: float
    correct: int
    count: int
    forward_passes: int
    proposals: tuple[Proposal, ...]
    clamped: int


@dataclass(frozen=True)
class TrainedModel:
    params: FloatArray
    log: TrainLog


_LOG_SOFTMAX = LogSoftmax()


def forward_log_probs(graph: ComputeGraph, params: FloatArray, inputs: FloatArray) -> FloatArray:
    logits = graph.forward(params, inputs)
    log_probs, _ = _LOG_SOFTMAX.forward((logits.data,), params)
    return log_probs


def _gradient_pass(
    graph: ComputeGraph,
    params: FloatArray,
    inputs: FloatArray,
    labels: np.ndarray,
    *,
    loss: LossName,
    ref: ReferenceDistribution | None,
    kl_weight: float,
) -> tuple[LossResult, FloatArray, FloatArray]:
    logits = graph.forward(params, inputs)
    log_probs, ctx = _LOG_SOFTMAX.forward((logits.data,), params)
    if loss == "cel":
        assert ref is not None
        result = cel(log_probs, labels, ref, kl_weight=kl_weight)
    else:
        result = nll(log_probs, labels)
    if not np.isfinite(result.value):
        raise NumericError(f"Non-finite {loss} loss ({result.value}).")
    (grad_logits,) = _LOG_SOFTMAX.backward(ctx, result.grad, params, None)
    return result, graph.backward(grad_logits), log_probs


def dca_step(
    bank: DcaParameterBank,
    graph: ComputeGraph,
    inputs: FloatArray,
    labels: np.ndarray,
    rng: np.random.Generator,
    *,
    loss: LossName,
    passes: int,
    lr: float,
    momentum: float,
    kl_weight: float = 1.0,
    average_gradients: bool = True,
    proposal_sampler: ProposalSampler = sample_proposal,
) -> StepResult:
    accumulator = bank.new_accumulator()
    forward_passes = 0
    ref: ReferenceDistribution | None = None
    proposals: list[Proposal] = []

    if loss == "cel":
        first = proposal_sampler(bank, rng)
        ref = ReferenceDistribution.from_log_probs(
            forward_log_probs(graph, assemble(bank, first), inputs)
        )
        forward_passes += 1

    total_loss = 0.0
    correct = 0
    clamped = 0
    for _ in range(passes):
        proposal = proposal_sampler(bank, rng)
        result, grads, log_probs = _gradient_pass(
            graph, assemble(bank, proposal), inputs, labels,
            loss=loss, ref=ref, kl_weight=kl_weight,
        )
        forward_passes += 1
        scatter_gradients(bank, proposal, grads, accumulator)
        proposals.append(proposal)
        if loss == "cel":
            ref = ReferenceDistribution.from_log_probs(log_probs)
        total_loss += result.value
        correct += int(np.count_nonzero(log_probs.argmax(axis=1) == labels))
        clamped += result.clamped

    sgd_momentum_update(bank, accumulator, lr=lr, momentum=momentum, average=average_gradients)
    return StepResult(
        loss=total_loss / passes,
        correct=correct,
        count=passes * labels.shape[0],
        forward_passes=forward_passes,
        proposals=tuple(proposals),
        clamped=clamped,
    )


def _check_compatible(bank: DcaParameterBank, data: Dataset) -> None:
    spec = bank.partition.model.spec
    if spec.class_count != data.class_count:
        raise DataError(
            f"Model predicts {spec.class_count} classes; dataset has {data.class_count}."
        )
    if spec.input_dim != data.dim:
        raise DimensionError(f"Model expects {spec.input_dim} inputs; dataset has {data.dim}.")


def _last_good_path(checkpoint_path: Path | None) -> Path | None:
    if checkpoint_path is None:
        return None
    return checkpoint_path.with_name(checkpoint_path.stem + ".last_good" + checkpoint_path.suffix)


def _run_epochs(
    bank: DcaParameterBank,
    data: Dataset,
    cfg: TrainConfig,
    *,
    method: str,
    epochs: int,
    passes: int,
    loss: LossName,
    checkpoint_path: Path | None,
    proposal_sampler: ProposalSampler,
) -> TrainLog:
    _check_compatible(bank, data)
    graph = bank.partition.model.graph()
    schedule = LrSchedule(
        base_lr=cfg.lr,
        total_epochs=epochs,
        kind=cfg.lr_schedule,
        decay=cfg.lr_decay,
        milestones=tuple(cfg.lr_milestones),
    )
    shuffle_ss, proposal_ss = np.random.SeedSequence(
        [cfg.resolved_seed(), _TRAIN_STREAM]
    ).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    proposal_rng = np.random.default_rng(proposal_ss)

    log = TrainLog(method=method)
    logger.info(
        "Training %s: epochs=%d passes=%d loss=%s n=%d components=%d",
        method, epochs, passes, loss, bank.n, bank.component_count,
    )
    for epoch in range(epochs):
        started = time.perf_counter()
        lr = schedule.lr_at(epoch)
        order = shuffle_rng.permutation(data.size)
        loss_sum = 0.0
        correct = 0
        seen = 0
        clamped = 0
        for start in range(0, data.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            try:
                step = dca_step(
                    bank, graph, data.inputs[batch], data.labels[batch], proposal_rng,
                    loss=loss, passes=passes, lr=lr, momentum=cfg.momentum,
                    kl_weight=cfg.kl_weight, average_gradients=cfg.average_gradients,
                    proposal_sampler=proposal_sampler,
                )
            except NumericError as e:
                saved = _last_good_path(checkpoint_path)
                if saved is not None:
                    write_checkpoint(saved, bank)
                logger.error("%s aborted at epoch %d: %s", method, epoch + 1, e)
                raise NumericError(f"{method} epoch {epoch + 1}: {e}", checkpoint=saved) from e
            loss_sum += step.loss * batch.size
            correct += step.correct
            seen += step.count
            clamped += step.clamped
            log.forward_passes += step.forward_passes
            log.steps += 1

        if clamped:
            logger.warning(
                "%s epoch %d: %d log-probabilit%s hit the probability floor",
                method, epoch + 1, clamped, "y" if clamped == 1 else "ies",
            )

        record = EpochRecord(
            epoch=epoch + 1,
            loss=loss_sum / data.size,
            accuracy=correct / seen,
            seconds=time.perf_counter() - started,
            lr=lr,
        )
        log.append(record)
        logger.info(
            "%s epoch %d/%d loss=%.4f acc=%.4f lr=%.4g %.2fs",
            method, record.epoch, epochs, record.loss, record.accuracy, lr, record.seconds,
        )

    if checkpoint_path is not None:
        log.checkpoint = write_checkpoint(checkpoint_path, bank)
    return log


def train_dca(
    bank: DcaParameterBank,
    data: Dataset,
    cfg: TrainConfig,
    *,
    loss: LossName | None = None,
    checkpoint_path: Path | None = None,
    proposal_sampler: ProposalSampler = sample_proposal,
) -> TrainLog:
    """Joint training for base_epochs * n epochs; the bank is updated in place."""
    loss = loss or cfg.resolved_loss(bank.granularity)
    return _run_epochs(
        bank, data, cfg,
        method=f"dca:{bank.granularity.value}",
        epochs=cfg.base_epochs * bank.n,
        passes=cfg.inner_passes or bank.n,
        loss=loss,
        checkpoint_path=checkpoint_path,
        proposal_sampler=proposal_sampler,
    )


def standard_bank(model: ModelSpec | BuiltModel, seed: int) -> DcaParameterBank:
    """One-instance modelwise bank; its instance is what init_bank(seed) draws first."""
    return init_instances(model, Granularity.MODELWISE, 1, seed)


def train_standard(
    model: ModelSpec | BuiltModel,
    data: Dataset,
    cfg: TrainConfig,
    *,
    checkpoint_path: Path | None = None,
) -> TrainedModel:
    bank = standard_bank(model, cfg.resolved_seed())
    log = _run_epochs(
        bank, data, cfg,
        method="standard",
        epochs=cfg.base_epochs,
        passes=1,
        loss="nll",
        checkpoint_path=checkpoint_path,
        proposal_sampler=sample_proposal,
    )
    return TrainedModel(params=bank.values[0].copy(), log=log)


def train_deep_ensemble(
    model: ModelSpec | BuiltModel,
    data: Dataset,
    cfg: TrainConfig,
    n: int,
    *,
    workers: int = 1,
) -> list[TrainedModel]:
    """n independent standard runs with seeds seed+0 .. seed+n-1, returned in member order."""
    built = model if isinstance(model, BuiltModel) else build_model(model)
    seed = cfg.resolved_seed()
    member_cfgs = [cfg.model_copy(update={"seed": seed + k}) for k in range(n)]

    def run(member_cfg: TrainConfig) -> TrainedModel:
        return train_standard(built, data, member_cfg)

    if workers <= 1 or n <= 1:
        return [run(c) for c in member_cfgs]
    with ThreadPoolExecutor(max_workers=min(workers, n)) as pool:
        return list(pool.map(run, member_cfgs))
