"""
Command-line entry point.

    dca train  CONFIG [key=value ...]
    dca eval   CONFIG [key=value ...] [--checkpoint PATH]
    dca shift | ood | diversity CONFIG [key=value ...]
    dca ablate CONFIG [key=value ...] [--axis granularity|loss|instance_count]
    dca inspect-checkpoint PATH

Every run command writes into out/<run-name>/:
- manifest.json   resolved config, seed, artifact hashes
- checkpoints/    binary banks and single models
- metrics/        CSV + JSON tables
- logs/           run.log, cells.jsonl, training-log CSVs

Exit codes: 0 ok, 1 config error, 2 data/format error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

from app.cli.lock import run_lock
from app.cli.manifest import write_manifest
from app.config import Settings, get_settings
from app.config.loader import load_config
from app.config.schemas import ExperimentConfig
from app.core.checkpoint import inspect_checkpoint, load_bank, read_checkpoint
from app.core.types import ConfigError, DcaError, FormatError
from app.data.sources import ExperimentData, load_experiment_data
from app.harness.audit import CellAuditLogger
from app.harness.executor import Cell, CellExecutor, CellOutcome
from app.harness.experiments import (
    ExperimentResult,
    run_ablations,
    run_individual_analysis,
    run_indomain,
    run_ood,
    run_shift,
)
from app.harness.methods import (
    MethodSpec,
    Predictor,
    ProposalEnsemble,
    SingleModel,
    TrainedMethod,
)
from app.harness.runners import build_method_registry
from app.harness.tables import summarize, write_summary_json, write_table
from app.metrics import OodScoreSet, evaluate, ood_score
from app.model.partition import partition
from app.model.spec import build_model
from app.utils.logging import attach_file_log, setup_logging

logger = logging.getLogger(__name__)

COMMANDS = ("train", "eval", "shift", "ood", "ablate", "diversity")


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    def create(self) -> None:
        for d in (self.checkpoints, self.metrics, self.logs):
            d.mkdir(parents=True, exist_ok=True)


@dataclass(frozen=True)
class Run:
    command: str
    cfg: ExperimentConfig
    data: ExperimentData
    paths: RunPaths
    executor: CellExecutor
    args: argparse.Namespace


def _executor(cfg: ExperimentConfig, paths: RunPaths, workers: int) -> CellExecutor:
    return CellExecutor(
        registry=build_method_registry(),
        audit_logger=CellAuditLogger(log_dir=paths.logs),
        workers=workers,
        checkpoint_dir=paths.checkpoints,
        run_name=cfg.run.name,
    )


def _raise_if_all_failed(outcomes: Sequence[CellOutcome]) -> None:
    if outcomes and all(not o.ok for o in outcomes):
        first = outcomes[0].error
        if first is not None:
            raise first


def _write_result(run: Run, name: str, result: ExperimentResult) -> None:
    write_table(result.table, run.paths.metrics / f"{name}.csv")
    write_summary_json(
        result.summary(),
        run.paths.metrics / f"{name}.json",
        command=run.command,
        seeds=list(run.cfg.harness.seeds),
    )
    failures = result.failures
    if not failures.empty:
        write_table(failures, run.paths.metrics / f"{name}.failures.csv")
        logger.warning("%d of %d cells failed; see %s.failures.csv",
                       len(failures), len(result.outcomes), name)


def cmd_train(run: Run) -> int:
    method = MethodSpec.parse(run.cfg.run.method, run.cfg)
    seed = run.cfg.train.resolved_seed()
    outcome = run.executor.execute(
        Cell(method=method, seed=seed), cfg=run.cfg, data=run.data, stage="train"
    )
    if outcome.error is not None:
        raise outcome.error
    assert outcome.trained is not None
    logs = outcome.trained.logs
    for k, log in enumerate(logs):
        suffix = "" if len(logs) == 1 else f".member{k}"
        path = log.write_csv(run.paths.logs / f"train_log{suffix}.csv")
        logger.info("%s: final loss %.4f, accuracy %.4f -> %s",
                    log.method, log.final_loss, log.final_accuracy, path)
    for ckpt in sorted(run.paths.checkpoints.glob("*.ckpt")):
        print(f"checkpoint: {ckpt}")
    return 0


def _checkpoint_predictor(path: Path, run: Run) -> Predictor:
    header = read_checkpoint(path).header
    spec = run.cfg.model.to_spec(input_dim=run.data.input_dim, class_count=run.data.class_count)
    model = build_model(spec)
    bank = load_bank(
        path, partition(model, header.granularity), rng_seed=run.cfg.train.resolved_seed()
    )
    if bank.n == 1:
        return SingleModel(model, bank.values[0])
    return ProposalEnsemble(
        bank,
        proposals=run.cfg.eval.inference_proposals,
        proposal_seed=run.cfg.eval.proposal_seed,
        mode=run.cfg.eval.aggregation,
    )


def cmd_eval(run: Run) -> int:
    checkpoint: Path | None = run.args.checkpoint
    if checkpoint is None:
        result = run_indomain(
            run.cfg.harness.methods, run.data, run.cfg, run.cfg.harness.seeds,
            executor=run.executor,
        )
        _raise_if_all_failed(result.outcomes)
        _write_result(run, "indomain", result)
        return 0

    predictor = _checkpoint_predictor(checkpoint, run)
    test = run.data.test
    batch = predictor.predict(test.inputs, test.labels)
    scores = None
    if run.data.ood is not None:
        scores = OodScoreSet(
            in_scores=ood_score(batch, run.cfg.eval.ood_score),
            out_scores=ood_score(predictor.predict(run.data.ood.inputs), run.cfg.eval.ood_score),
        )
    report = evaluate(batch, bins=run.cfg.eval.ece_bins, ood=scores)
    report.write_json(run.paths.metrics / "eval.json")
    report.write_csv(run.paths.metrics / "eval.csv")
    print(f"accuracy={report.accuracy:.4f} nll={report.nll:.4f} "
          f"ece={report.ece:.4f} brier={report.brier:.4f}")
    return 0


def _trained_for_harness(run: Run) -> list[TrainedMethod]:
    result = run_indomain(
        run.cfg.harness.methods, run.data, run.cfg, run.cfg.harness.seeds,
        executor=run.executor, stage=run.command,
    )
    _raise_if_all_failed(result.outcomes)
    _write_result(run, "indomain", result)
    return result.trained


def cmd_shift(run: Run) -> int:
    shift = run_shift(_trained_for_harness(run), run.data.test, run.cfg)
    write_table(shift.table, run.paths.metrics / "shift.csv")
    write_summary_json(
        summarize(shift.table, ("kind", "severity")),
        run.paths.metrics / "shift.json",
        command=run.command,
        violations=shift.violations,
    )
    return 0


def cmd_ood(run: Run) -> int:
    if run.data.ood is None:
        raise ConfigError("The ood command needs an outlier set (data.ood_images for IDX data).")
    ood = run_ood(_trained_for_harness(run), run.data.test, run.data.ood, run.cfg)
    write_table(ood.table, run.paths.metrics / "ood.csv")
    write_table(ood.roc, run.paths.metrics / "ood_roc.csv")
    write_summary_json(summarize(ood.table), run.paths.metrics / "ood.json", command=run.command)
    return 0


def cmd_ablate(run: Run) -> int:
    axis = run.args.axis or run.cfg.harness.ablation_axis
    result = run_ablations(axis, run.data, run.cfg, run.cfg.harness.seeds, executor=run.executor)
    _raise_if_all_failed(result.outcomes)
    _write_result(run, f"ablate_{axis}", result)
    return 0


def cmd_diversity(run: Run) -> int:
    analysis = run_individual_analysis(
        run.data, run.cfg, run.cfg.harness.seeds, executor=run.executor
    )
    _raise_if_all_failed(analysis.outcomes)
    m = run.paths.metrics
    write_table(analysis.members, m / "members.csv")
    write_table(analysis.diversity, m / "diversity.csv")
    write_table(analysis.baseline, m / "members_baseline.csv")
    write_summary_json(summarize(analysis.members, ("member",)), m / "members.json",
                       command=run.command)
    diversity_summary = (
        analysis.diversity.drop(columns=["seed"]).groupby(["loss", "n"], sort=False).mean()
        .reset_index()
    )
    write_summary_json(diversity_summary, m / "diversity.json", command=run.command)
    return 0


HANDLERS: dict[str, Callable[[Run], int]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "shift": cmd_shift,
    "ood": cmd_ood,
    "ablate": cmd_ablate,
    "diversity": cmd_diversity,
}


def cmd_inspect(path: Path) -> int:
    header = inspect_checkpoint(path)
    print(header.describe())
    if not header.crc_ok:
        error = FormatError(
            f"Checkpoint CRC mismatch: stored {header.stored_crc:08x}, "
            f"computed {header.computed_crc:08x}."
        )
        print(f"error: {error}", file=sys.stderr)
        return error.exit_code
    return 0


def _run_command(args: argparse.Namespace, settings: Settings) -> int:
    overrides = list(args.overrides)
    if args.run_name:
        overrides.append(f"run.name={args.run_name}")
    config_path = Path(args.config)
    cfg = load_config(config_path, overrides, settings=settings)
    out_dir = Path(args.out_dir) if args.out_dir else settings.out_dir
    paths = RunPaths(out_dir / cfg.run.name)
    workers = args.workers or cfg.harness.workers or settings.workers

    with run_lock(paths.root, settings):
        paths.create()
        handler = attach_file_log(paths.logs / "run.log")
        try:
            logger.info("dca %s: run=%s seed=%d workers=%d",
                        args.command, cfg.run.name, cfg.train.resolved_seed(), workers)
            run = Run(
                command=args.command,
                cfg=cfg,
                data=load_experiment_data(cfg.data),
                paths=paths,
                executor=_executor(cfg, paths, workers),
                args=args,
            )
            code = HANDLERS[args.command](run)
            manifest = write_manifest(
                paths.root, command=args.command, cfg=cfg,
                config_source=config_path, overrides=overrides,
            )
            print(f"manifest: {manifest}")
            return code
        finally:
            logging.getLogger().removeHandler(handler)
            handler.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dca", description="Deep combinatorial aggregation.")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="Flat key = value config file, or a run's manifest.json.")
        p.add_argument("overrides", nargs="*", metavar="key=value")
        p.add_argument("--out-dir", default=None, help="Output root (default: DCA_OUT_DIR).")
        p.add_argument("--run-name", default=None, help="Same as run.name=...")
        p.add_argument("--workers", type=int, default=None)
        if name == "eval":
            p.add_argument("--checkpoint", type=Path, default=None,
                           help="Evaluate this checkpoint instead of the method matrix.")
        if name == "ablate":
            p.add_argument(
                "--axis", choices=["granularity", "loss", "instance_count"], default=None
            )

    p = sub.add_parser("inspect-checkpoint")
    p.add_argument("checkpoint", type=Path)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.log_level)
    try:
        if args.command == "inspect-checkpoint":
            return cmd_inspect(args.checkpoint)
        return _run_command(args, settings)
    except DcaError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
