"""
Trainers for every method kind, and the registry wiring.

All four kinds train on the experiment's training split with the cell's
seed and return a predictor ready for evaluation.
"""

from __future__ import annotations

from pathlib import Path

from app.averaging.dcwa import average_weights
from app.config.schemas import TrainConfig
from app.core.bank import DcaParameterBank, init_bank
from app.core.checkpoint import write_checkpoint
from app.harness.methods import MethodSpec, ProposalEnsemble, SingleModel, TrainedMethod
from app.harness.registry import CellContext, MethodRegistry
from app.model.spec import BuiltModel, build_model
from app.training.run_log import TrainLog
from app.training.trainer import train_dca, train_deep_ensemble, train_standard


def cell_train_config(ctx: CellContext) -> TrainConfig:
    return ctx.cfg.train.model_copy(update={"seed": ctx.seed})


def cell_model(ctx: CellContext) -> BuiltModel:
    spec = ctx.cfg.model.to_spec(input_dim=ctx.data.input_dim, class_count=ctx.data.class_count)
    return build_model(spec)


def _checkpoint(ctx: CellContext, name: str) -> Path | None:
    if ctx.checkpoint_dir is None:
        return None
    return ctx.checkpoint_dir / f"{name}.seed{ctx.seed}.ckpt"


def trained_bank(method: MethodSpec, ctx: CellContext) -> tuple[DcaParameterBank, TrainLog]:
    """The jointly trained bank for (granularity, loss, n, seed), trained at most once."""
    assert method.granularity is not None
    key = ("bank", method.granularity, method.loss, method.n, ctx.seed)

    def train() -> tuple[DcaParameterBank, TrainLog]:
        bank = init_bank(cell_model(ctx), method.granularity, method.n, ctx.seed)
        name = f"dca-{method.granularity.value}-{method.loss}-n{method.n}"
        log = train_dca(
            bank, ctx.data.train, cell_train_config(ctx),
            loss=method.loss, checkpoint_path=_checkpoint(ctx, name),
        )
        return bank, log

    return ctx.cache.get_or_create(key, train)


def run_standard(method: MethodSpec, ctx: CellContext) -> TrainedMethod:
    model = cell_model(ctx)
    result = ctx.cache.get_or_create(
        ("standard", ctx.seed),
        lambda: train_standard(
            model, ctx.data.train, cell_train_config(ctx),
            checkpoint_path=_checkpoint(ctx, "standard"),
        ),
    )
    return TrainedMethod(
        method=method, seed=ctx.seed,
        predictor=SingleModel(model, result.params), logs=[result.log],
    )


def run_deep_ensemble(method: MethodSpec, ctx: CellContext) -> TrainedMethod:
    model = cell_model(ctx)
    members = train_deep_ensemble(model, ctx.data.train, cell_train_config(ctx), method.n)
    bank = DcaParameterBank.from_members(model, [m.params for m in members], rng_seed=ctx.seed)
    path = _checkpoint(ctx, f"deep_ensemble-n{method.n}")
    if path is not None:
        write_checkpoint(path, bank)
    predictor = ProposalEnsemble(
        bank,
        proposals=max(ctx.cfg.eval.inference_proposals, method.n),
        proposal_seed=ctx.cfg.eval.proposal_seed,
        mode=ctx.cfg.eval.aggregation,
    )
    return TrainedMethod(
        method=method, seed=ctx.seed, predictor=predictor,
        logs=[m.log for m in members], bank=bank,
    )


def run_dca(method: MethodSpec, ctx: CellContext) -> TrainedMethod:
    bank, log = trained_bank(method, ctx)
    predictor = ProposalEnsemble(
        bank,
        proposals=ctx.cfg.eval.inference_proposals,
        proposal_seed=ctx.cfg.eval.proposal_seed,
        mode=ctx.cfg.eval.aggregation,
    )
    return TrainedMethod(method=method, seed=ctx.seed, predictor=predictor, logs=[log], bank=bank)


def run_dcwa(method: MethodSpec, ctx: CellContext) -> TrainedMethod:
    assert method.granularity is not None
    bank, log = trained_bank(method, ctx)
    averaged = average_weights(bank)
    path = _checkpoint(ctx, f"dcwa-{method.granularity.value}-{method.loss}-n{method.n}")
    if path is not None:
        averaged.save(path)
    return TrainedMethod(
        method=method,
        seed=ctx.seed,
        predictor=SingleModel(bank.partition.model, averaged.params),
        logs=[log],
        bank=bank,
        coarse_grain_warning=averaged.coarse_grain_warning,
    )


def build_method_registry() -> MethodRegistry:
    registry = MethodRegistry()
    registry.register("standard", run_standard)
    registry.register("deep_ensemble", run_deep_ensemble)
    registry.register("dca", run_dca)
    registry.register("dcwa", run_dcwa)
    return registry
