from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from app.core.bank import init_bank
from app.core.types import ConfigError, NumericError
from app.harness.audit import CellAuditLogger
from app.harness.executor import Cell, CellExecutor
from app.harness.experiments import (
    ablation_methods,
    analyze_members,
    evaluate_trained,
    run_ablations,
    run_indomain,
    run_individual_analysis,
    run_ood,
    run_shift,
)
from app.harness.methods import MethodSpec, SingleModel, TrainedMethod
from app.harness.registry import MethodRegistry
from app.harness.runners import build_method_registry
from app.harness.tables import long_form, summarize
from app.metrics import evaluate
from app.model.spec import build_model


def _values(table: pd.DataFrame) -> dict[str, float]:
    return dict(zip(table["metric"], table["value"]))


def _model(cfg, data):
    return build_model(cfg.model.to_spec(input_dim=data.input_dim, class_count=data.class_count))


def test_method_labels(small_cfg):
    assert MethodSpec.parse("standard", small_cfg).label == "standard"
    assert MethodSpec.parse("deep_ensemble", small_cfg, n=3).label == "deep_ensemble:n3"
    assert MethodSpec.parse("dca:layer:nll", small_cfg).label == "dca:layerwise:nll:n2"
    # "auto" resolves to CEL except for trunkwise banks
    assert MethodSpec.parse("dca:layerwise", small_cfg).loss == "cel"
    assert MethodSpec.parse("dcwa:trunkwise", small_cfg).loss == "nll"
    assert MethodSpec.parse("dca", small_cfg).granularity == small_cfg.dca.granularity


@pytest.mark.parametrize("text", ["bogus", "dca:nowhere", "dca:layerwise:mse", "dca:a:b:c"])
def test_bad_method_names(small_cfg, text):
    with pytest.raises(ConfigError):
        MethodSpec.parse(text, small_cfg)


def test_deep_ensemble_of_one_matches_standard(small_cfg, small_data):
    single = MethodSpec.parse("deep_ensemble", small_cfg, n=1)
    result = run_indomain(["standard", single], small_data, small_cfg, [0])
    table = result.table
    standard = _values(table[table["method"] == "standard"])
    ensemble = _values(table[table["method"] == "deep_ensemble"])
    assert standard == ensemble


def test_dca_and_dcwa_share_one_trained_bank(small_cfg, small_data):
    executor = CellExecutor(registry=build_method_registry())
    result = run_indomain(
        ["dca:layerwise", "dcwa:layerwise"], small_data, small_cfg, [0], executor=executor
    )
    dca, dcwa = result.trained
    assert dca.bank is dcwa.bank
    assert len(executor.cache) == 1


def test_modelwise_dcwa_is_flagged(small_cfg, small_data):
    table = run_indomain(["dcwa:modelwise", "dcwa:layerwise"], small_data, small_cfg, [0]).table
    flags = table.groupby("granularity")["coarse_grain_warning"].unique()
    assert flags["modelwise"].tolist() == [True]
    assert flags["layerwise"].tolist() == [False]


def test_every_cell_leaves_an_audit_line(tmp_path, small_cfg, small_data):
    audit = CellAuditLogger(log_dir=tmp_path)
    executor = CellExecutor(registry=build_method_registry(), audit_logger=audit, run_name="t")
    run_indomain(["standard", "dca:layerwise"], small_data, small_cfg, [0, 1], executor=executor)
    events = audit.read()
    assert len(events) == 4
    assert {e.status for e in events} == {"success"}
    assert [(e.method, e.seed) for e in events] == [
        ("standard", 0), ("standard", 1),
        ("dca:layerwise:cel:n2", 0), ("dca:layerwise:cel:n2", 1),
    ]


def test_failed_cells_are_captured(small_cfg, small_data):
    def diverge(method, ctx):
        raise NumericError("loss went to NaN")

    registry = build_method_registry()
    registry.register("dca", diverge)
    result = run_indomain(
        ["standard", "dca:layerwise"], small_data, small_cfg, [0],
        executor=CellExecutor(registry=registry),
    )
    assert [o.ok for o in result.outcomes] == [True, False]
    failures = result.failures
    assert failures["error_type"].tolist() == ["NumericError"]
    assert set(result.table["method"]) == {"standard"}


def test_unregistered_kind_is_a_failed_cell(small_cfg, small_data):
    executor = CellExecutor(registry=MethodRegistry())
    outcome = executor.execute(
        Cell(MethodSpec.parse("standard", small_cfg), 0),
        cfg=small_cfg, data=small_data, stage="indomain",
    )
    assert not outcome.ok
    assert outcome.error_type == "ConfigError"


def test_parallel_cells_keep_declared_order(small_cfg, small_data):
    sequential = run_indomain(["standard", "dca:layerwise"], small_data, small_cfg, [0, 1])
    parallel = run_indomain(
        ["standard", "dca:layerwise"], small_data, small_cfg, [0, 1],
        executor=CellExecutor(registry=build_method_registry(), workers=3),
    )
    pd.testing.assert_frame_equal(sequential.table, parallel.table)


def test_severity_zero_reproduces_indomain_rows(small_cfg, small_data):
    result = run_indomain(["standard", "dca:layerwise"], small_data, small_cfg, [0])
    shift = run_shift(
        result.trained, small_data.test, small_cfg, kinds=["gaussian_noise"], severities=[0, 5]
    )
    for method in ("standard", "dca"):
        indomain = _values(result.table[result.table["method"] == method])
        clean = shift.table[(shift.table["method"] == method) & (shift.table["severity"] == 0)]
        assert _values(clean) == indomain
    assert set(shift.table["severity"]) == {0, 5}


@pytest.mark.parametrize("severities", [[1, 5], [], [0, 6]])
def test_bad_severity_lists(small_cfg, small_data, severities):
    trained = run_indomain(["standard"], small_data, small_cfg, [0]).trained
    with pytest.raises(ConfigError):
        run_shift(trained, small_data.test, small_cfg, severities=severities)


def test_ood_table_and_roc(small_cfg, small_data):
    trained = run_indomain(["standard", "dca:layerwise"], small_data, small_cfg, [0]).trained
    result = run_ood(trained, small_data.test, small_data.ood, small_cfg)
    assert set(result.table["metric"]) == {
        "fpr_at_95_tpr", "detection_error", "auroc", "aupr_in", "aupr_out",
    }
    assert {"method", "seed", "fpr", "tpr"} <= set(result.roc.columns)
    assert set(result.roc["method"]) == {"standard", "dca"}


def test_granularity_ablation_has_ten_configurations(small_cfg):
    methods = ablation_methods("granularity", small_cfg)
    assert len(methods) == 10
    assert len({m.label for m in methods}) == 10


def test_loss_ablation_pairs_each_base_with_both_losses(small_cfg):
    labels = [m.label for m in ablation_methods("loss", small_cfg)]
    assert labels == [
        "dcwa:layerwise:nll:n2", "dcwa:layerwise:cel:n2",
        "dca:trunkwise:nll:n2", "dca:trunkwise:cel:n2",
        "dca:modelwise:nll:n2", "dca:modelwise:cel:n2",
    ]


def test_instance_counts_below_two_are_rejected(small_cfg):
    harness = small_cfg.harness.model_copy(update={"instance_counts": [1, 2]})
    cfg = small_cfg.model_copy(update={"harness": harness})
    with pytest.raises(ConfigError, match=">= 2"):
        ablation_methods("instance_count", cfg)


@pytest.mark.slow
def test_granularity_ablation_runs_every_cell(small_cfg, small_data):
    result = run_ablations("granularity", small_data, small_cfg, [0])
    assert all(o.ok for o in result.outcomes)
    assert set(result.table["axis"]) == {"granularity"}
    summary = result.summary()
    assert len(summary[summary["metric"] == "accuracy"]) == 10


def test_single_run_summary_has_zero_std():
    rows = [
        {"method": "standard", "granularity": "", "loss": "nll", "n": 1, "seed": 0,
         "coarse_grain_warning": False, "metric": "accuracy", "value": 0.8},
    ]
    summary = summarize(long_form(rows))
    assert summary["std"].tolist() == [0.0]
    assert summary["single_run"].tolist() == [True]
    assert summary["runs"].tolist() == [1]


def test_multi_seed_summary_uses_sample_std():
    rows = [
        {"method": "dca", "granularity": "layerwise", "loss": "cel", "n": 2, "seed": s,
         "coarse_grain_warning": False, "metric": "accuracy", "value": v}
        for s, v in enumerate([0.7, 0.9])
    ]
    summary = summarize(long_form(rows))
    assert summary["mean"].tolist() == pytest.approx([0.8])
    assert summary["std"].tolist() == pytest.approx([np.std([0.7, 0.9], ddof=1)])
    assert summary["single_run"].tolist() == [False]


def test_member_analysis_matches_single_models(small_cfg, small_data):
    model = _model(small_cfg, small_data)
    bank = init_bank(model, "modelwise", 3, seed=0)
    analysis = analyze_members(bank, small_data.test, small_cfg)
    assert len(analysis.reports) == 3
    for i, report in enumerate(analysis.reports):
        alone = SingleModel(model, bank.values[i]).predict(
            small_data.test.inputs, small_data.test.labels
        )
        assert report == evaluate(alone, bins=small_cfg.eval.ece_bins)
    assert analysis.diversity.members == 3


def test_member_analysis_needs_a_modelwise_bank(small_cfg, small_data):
    bank = init_bank(_model(small_cfg, small_data), "layerwise", 2, seed=0)
    with pytest.raises(ConfigError):
        analyze_members(bank, small_data.test, small_cfg)


def test_evaluate_trained_on_a_single_model(small_cfg, small_data):
    model = _model(small_cfg, small_data)
    trained = TrainedMethod(
        method=MethodSpec.parse("standard", small_cfg),
        seed=0,
        predictor=SingleModel(model, init_bank(model, "modelwise", 2, seed=0).values[0]),
    )
    report = evaluate_trained(trained, small_data.test, small_cfg)
    assert 0.0 <= report.accuracy <= 1.0
    assert report.ood is None


@pytest.mark.slow
def test_individual_analysis_tables(small_cfg, small_data):
    result = run_individual_analysis(small_data, small_cfg, [0])
    assert result.diversity["loss"].tolist() == ["nll", "cel"]
    assert sorted(set(result.members["member"])) == [0, 1]
    assert set(result.baseline["method"]) == {"standard"}
