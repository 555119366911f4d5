"""
The experiment matrix at desk scale.

- run_indomain: train every (method, seed) cell and evaluate on the test split
- run_shift: re-evaluate trained methods on corrupted test sets per severity
- run_ood: separate the in-domain test set from an outlier set
- run_ablations: sweep granularity, loss or instance count
- run_individual_analysis: evaluate modelwise members alone, plus diversity

Cells are assembled in declared order (methods, then seeds), never in
completion order, so every table is reproducible from (config, seed).
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import pandas as pd

from app.config.schemas import ExperimentConfig
from app.core.bank import DcaParameterBank
from app.core.types import ConfigError, DcaError
from app.data.corruption import MAX_SEVERITY, CorruptionKind, CorruptionSpec, corrupt
from app.data.datasets import Dataset
from app.data.sources import ExperimentData
from app.harness.executor import Cell, CellExecutor, CellOutcome
from app.harness.methods import MethodSpec, SingleModel, TrainedMethod
from app.harness.runners import build_method_registry
from app.harness.tables import (
    failures_frame,
    long_form,
    method_columns,
    metric_rows,
    report_rows,
    summarize,
)
from app.metrics import (
    DiversityReport,
    MetricsReport,
    OodScoreSet,
    diversity,
    evaluate,
    ood_metrics,
    ood_score,
    roc_points,
)
from app.model.partition import Granularity

logger = logging.getLogger(__name__)

AblationAxis = Literal["granularity", "loss", "instance_count"]


@dataclass
class ExperimentResult:
    outcomes: list[CellOutcome]
    table: pd.DataFrame
    extra_columns: tuple[str, ...] = ()

    @property
    def trained(self) -> list[TrainedMethod]:
        return [o.trained for o in self.outcomes if o.ok and o.trained is not None]

    @property
    def failures(self) -> pd.DataFrame:
        return failures_frame(self.outcomes)

    def summary(self) -> pd.DataFrame:
        return summarize(self.table, self.extra_columns)


@dataclass
class ShiftResult:
    table: pd.DataFrame
    violations: list[str] = field(default_factory=list)


@dataclass
class OodResult:
    table: pd.DataFrame
    roc: pd.DataFrame


@dataclass(frozen=True)
class MemberAnalysis:
    reports: list[MetricsReport]
    diversity: DiversityReport


@dataclass
class IndividualAnalysis:
    members: pd.DataFrame
    diversity: pd.DataFrame
    baseline: pd.DataFrame
    outcomes: list[CellOutcome]


def _executor(executor: CellExecutor | None) -> CellExecutor:
    return executor or CellExecutor(registry=build_method_registry())


def _resolve(methods: Sequence[str | MethodSpec], cfg: ExperimentConfig) -> list[MethodSpec]:
    return [m if isinstance(m, MethodSpec) else MethodSpec.parse(m, cfg) for m in methods]


def evaluate_trained(
    trained: TrainedMethod, data: Dataset, cfg: ExperimentConfig
) -> MetricsReport:
    batch = trained.predictor.predict(data.inputs, data.labels)
    return evaluate(batch, bins=cfg.eval.ece_bins)


def run_indomain(
    methods: Sequence[str | MethodSpec],
    data: ExperimentData,
    cfg: ExperimentConfig,
    seeds: Sequence[int],
    *,
    executor: CellExecutor | None = None,
    stage: str = "indomain",
) -> ExperimentResult:
    if not seeds:
        raise ConfigError("At least one seed is required.")
    specs = _resolve(methods, cfg)
    cells = [Cell(method=m, seed=s) for m in specs for s in seeds]
    outcomes = _executor(executor).run(
        cells, cfg=cfg, data=data, stage=stage,
        evaluate=lambda t: evaluate_trained(t, data.test, cfg),
    )
    rows = []
    for o in outcomes:
        if o.ok and o.trained is not None:
            rows.extend(report_rows(o.trained, o.result))
    return ExperimentResult(outcomes=outcomes, table=long_form(rows))


def _check_severities(severities: Sequence[int]) -> list[int]:
    if not severities:
        raise ConfigError("harness.severities is empty; list 0..5.")
    if 0 not in severities:
        raise ConfigError(
            "harness.severities must include 0 (the uncorrupted in-domain reference)."
        )
    bad = [s for s in severities if not 0 <= s <= MAX_SEVERITY]
    if bad:
        raise ConfigError(f"Severities must lie in [0, {MAX_SEVERITY}]; got {bad}.")
    return sorted(set(severities))


def run_shift(
    trained: Sequence[TrainedMethod],
    test: Dataset,
    cfg: ExperimentConfig,
    *,
    kinds: Sequence[CorruptionKind] | None = None,
    severities: Sequence[int] | None = None,
) -> ShiftResult:
    kinds = list(kinds if kinds is not None else cfg.harness.corruptions)
    levels = _check_severities(
        list(severities if severities is not None else cfg.harness.severities)
    )
    rows = []
    violations = []
    for t in trained:
        for kind in kinds:
            accuracy_at: dict[int, float] = {}
            for severity in levels:
                shifted = corrupt(test, CorruptionSpec(kind, severity), cfg.data.seed)
                try:
                    report = evaluate_trained(t, shifted, cfg)
                except DcaError as e:
                    logger.error("Shift %s %s@%d failed: %s", t.method.label, kind, severity, e)
                    continue
                accuracy_at[severity] = report.accuracy
                rows.extend(report_rows(t, report, kind=kind, severity=severity))
            top = max(accuracy_at, default=0)
            if 0 in accuracy_at and top and accuracy_at[top] > accuracy_at[0]:
                violations.append(
                    f"{t.method.label} seed={t.seed} {kind}: accuracy {accuracy_at[top]:.4f} "
                    f"at severity {top} exceeds {accuracy_at[0]:.4f} at severity 0"
                )
    for v in violations:
        logger.warning("Shift ordering violated: %s", v)
    return ShiftResult(table=long_form(rows, ("kind", "severity")), violations=violations)


def run_ood(
    trained: Sequence[TrainedMethod],
    in_test: Dataset,
    out_test: Dataset,
    cfg: ExperimentConfig,
) -> OodResult:
    rows = []
    roc_frames = []
    for t in trained:
        try:
            in_batch = t.predictor.predict(in_test.inputs)
            out_batch = t.predictor.predict(out_test.inputs)
            scores = OodScoreSet(
                in_scores=ood_score(in_batch, cfg.eval.ood_score),
                out_scores=ood_score(out_batch, cfg.eval.ood_score),
            )
            report = ood_metrics(scores)
        except DcaError as e:
            logger.error("OOD evaluation of %s failed: %s", t.method.label, e)
            continue
        rows.extend(metric_rows(t, report.model_dump()))
        roc = roc_points(scores)
        for column, value in reversed(list(method_columns(t).items())):
            roc.insert(0, column, value)
        roc_frames.append(roc)
    roc_table = pd.concat(roc_frames, ignore_index=True) if roc_frames else pd.DataFrame()
    return OodResult(table=long_form(rows), roc=roc_table)


def ablation_methods(axis: AblationAxis, cfg: ExperimentConfig) -> list[MethodSpec]:
    if axis == "granularity":
        return [
            MethodSpec.parse(f"{kind}:{g.value}", cfg)
            for g in Granularity
            for kind in ("dca", "dcwa")
        ]
    if axis == "loss":
        return [
            MethodSpec.parse(f"{base}:{loss}", cfg)
            for base in ("dcwa:layerwise", "dca:trunkwise", "dca:modelwise")
            for loss in ("nll", "cel")
        ]
    if axis == "instance_count":
        counts = cfg.harness.instance_counts
        if not counts or min(counts) < 2:
            raise ConfigError(f"harness.instance_counts must all be >= 2; got {counts}.")
        return [
            MethodSpec.parse(f"dca:{cfg.dca.granularity.value}", cfg, n=n) for n in counts
        ]
    raise ConfigError(f"Unknown ablation axis {axis!r}; use granularity, loss or instance_count.")


def run_ablations(
    axis: AblationAxis,
    data: ExperimentData,
    cfg: ExperimentConfig,
    seeds: Sequence[int],
    *,
    executor: CellExecutor | None = None,
) -> ExperimentResult:
    methods = ablation_methods(axis, cfg)
    logger.info("Ablation over %s: %d configurations", axis, len(methods))
    result = run_indomain(methods, data, cfg, seeds, executor=executor, stage=f"ablate:{axis}")
    table = result.table.copy()
    table.insert(len(table.columns) - 2, "axis", axis)
    return ExperimentResult(outcomes=result.outcomes, table=table, extra_columns=("axis",))


def analyze_members(
    bank: DcaParameterBank, data: Dataset, cfg: ExperimentConfig
) -> MemberAnalysis:
    """Each whole-model member alone, then the diversity across members."""
    if bank.granularity is not Granularity.MODELWISE:
        raise ConfigError(
            f"Individual-member analysis needs a modelwise bank; got {bank.granularity.value}."
        )
    model = bank.partition.model
    batches = [
        SingleModel(model, bank.values[i]).predict(data.inputs, data.labels)
        for i in range(bank.n)
    ]
    return MemberAnalysis(
        reports=[evaluate(b, bins=cfg.eval.ece_bins) for b in batches],
        diversity=diversity(batches),
    )


def run_individual_analysis(
    data: ExperimentData,
    cfg: ExperimentConfig,
    seeds: Sequence[int],
    *,
    executor: CellExecutor | None = None,
) -> IndividualAnalysis:
    if not seeds:
        raise ConfigError("At least one seed is required.")
    n = cfg.dca.n
    specs = [
        MethodSpec(kind="dca", granularity=Granularity.MODELWISE, loss="nll", n=n),
        MethodSpec(kind="dca", granularity=Granularity.MODELWISE, loss="cel", n=n),
        MethodSpec(kind="standard", granularity=None, loss="nll", n=1),
    ]
    cells = [Cell(method=m, seed=s) for s in seeds for m in specs]

    def analyze(t: TrainedMethod) -> MemberAnalysis | MetricsReport:
        if t.method.kind == "standard":
            return evaluate_trained(t, data.test, cfg)
        assert t.bank is not None
        return analyze_members(t.bank, data.test, cfg)

    outcomes = _executor(executor).run(
        cells, cfg=cfg, data=data, stage="individual", evaluate=analyze
    )

    member_rows = []
    diversity_rows = []
    baseline_rows = []
    for o in outcomes:
        if not o.ok or o.trained is None:
            continue
        t = o.trained
        if isinstance(o.result, MetricsReport):
            baseline_rows.extend(report_rows(t, o.result))
            continue
        for member, report in enumerate(o.result.reports):
            member_rows.extend(report_rows(t, report, member=member))
        diversity_rows.append(
            {
                "seed": t.seed, "loss": t.method.loss, "n": t.method.n,
                **o.result.diversity.model_dump(),
            }
        )
    return IndividualAnalysis(
        members=long_form(member_rows, ("member",)),
        diversity=pd.DataFrame(
            diversity_rows,
            columns=[
                "seed", "loss", "n",
                "pairwise_kl", "classwise_variance", "js_divergence", "members",
            ],
        ),
        baseline=long_form(baseline_rows),
        outcomes=outcomes,
    )
