"""
Directional desk-scale checks.

Trains the default method matrix over five seeds and prints PASS/FAIL for
each qualitative ordering the method is expected to show:
- modelwise DCA >= deep ensemble >= standard on accuracy (reverse on NLL)
- layerwise DCWA (CEL) >= standard on accuracy
- NLL-trained modelwise members are more diverse than CEL-trained ones
- accuracy never improves from severity 0 to severity 5
- every method separates the outlier set (AUROC well above 0.5)

Each ordering is allowed one pooled standard error of slack.

Run:
  python scripts/run_acceptance.py configs/default.conf
  python scripts/run_acceptance.py configs/default.conf harness.seeds=0,1
"""

from __future__ import annotations

import argparse
import math
import time
from pathlib import Path

import pandas as pd

from app.config import get_settings
from app.config.loader import load_config
from app.data.sources import load_experiment_data
from app.harness.executor import CellExecutor
from app.harness.experiments import run_individual_analysis, run_indomain, run_ood, run_shift
from app.harness.runners import build_method_registry
from app.utils.logging import setup_logging

METHODS = ["standard", "deep_ensemble", "dca:modelwise", "dcwa:layerwise:cel"]


def _stats(
    summary: pd.DataFrame, kind: str, metric: str, granularity: str = ""
) -> tuple[float, float, int]:
    row = summary[
        (summary["method"] == kind)
        & (summary["granularity"] == granularity)
        & (summary["metric"] == metric)
    ]
    if row.empty:
        return math.nan, math.nan, 0
    r = row.iloc[0]
    return float(r["mean"]), float(r["std"]), int(r["runs"])


def _at_least(
    summary: pd.DataFrame,
    metric: str,
    a: tuple[str, str],
    b: tuple[str, str],
    *,
    lower_is_better: bool,
) -> tuple[bool, str]:
    ma, sa, na = _stats(summary, a[0], metric, a[1])
    mb, sb, nb = _stats(summary, b[0], metric, b[1])
    slack = math.sqrt(sa**2 / max(na, 1) + sb**2 / max(nb, 1))
    ok = ma <= mb + slack if lower_is_better else ma >= mb - slack
    label_a, label_b = ":".join(filter(None, a)), ":".join(filter(None, b))
    return ok, f"{metric}: {label_a} {ma:.4f} vs {label_b} {mb:.4f} (slack {slack:.4f})"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("config", type=Path)
    parser.add_argument("overrides", nargs="*")
    args = parser.parse_args()

    s = get_settings()
    setup_logging(s.log_level)
    cfg = load_config(args.config, args.overrides, settings=s)
    data = load_experiment_data(cfg.data)
    executor = CellExecutor(
        registry=build_method_registry(), workers=cfg.harness.workers or s.workers
    )
    seeds = cfg.harness.seeds
    start = time.perf_counter()

    checks: list[tuple[str, bool, str]] = []

    indomain = run_indomain(METHODS, data, cfg, seeds, executor=executor)
    summary = indomain.summary()
    dca = ("dca", "modelwise")
    ens = ("deep_ensemble", "")
    std = ("standard", "")
    for name, a, b in [("DCA >= ensemble", dca, ens), ("ensemble >= standard", ens, std)]:
        ok, detail = _at_least(summary, "accuracy", a, b, lower_is_better=False)
        checks.append((f"in-domain accuracy {name}", ok, detail))
        ok, detail = _at_least(summary, "nll", a, b, lower_is_better=True)
        checks.append((f"in-domain NLL {name}", ok, detail))
    ok, detail = _at_least(summary, "accuracy", ("dcwa", "layerwise"), std, lower_is_better=False)
    checks.append(("DCWA (CEL) accuracy >= standard", ok, detail))

    individual = run_individual_analysis(data, cfg, seeds, executor=executor)
    columns = ["pairwise_kl", "classwise_variance", "js_divergence"]
    by_loss = individual.diversity.groupby("loss")[columns].mean()
    if {"nll", "cel"} <= set(by_loss.index):
        for column in by_loss.columns:
            nll_v, cel_v = by_loss.loc["nll", column], by_loss.loc["cel", column]
            checks.append(
                (f"members more diverse without CEL ({column})", bool(nll_v > cel_v),
                 f"nll {nll_v:.5f} vs cel {cel_v:.5f}")
            )
    else:
        checks.append(("members more diverse without CEL", False, "diversity cells failed"))

    shift = run_shift(indomain.trained, data.test, cfg, severities=[0, 5])
    checks.append(
        ("accuracy at severity 5 <= severity 0", not shift.violations,
         f"{len(shift.violations)} violation(s)")
    )

    if data.ood is not None:
        ood = run_ood(indomain.trained, data.test, data.ood, cfg)
        aurocs = ood.table[ood.table["metric"] == "auroc"]
        n_in, n_out = data.test.size, data.ood.size
        # Std of the Mann-Whitney AUC under the null, a tie-free stand-in for 3 sigma.
        sigma = math.sqrt((n_in + n_out + 1) / (12 * n_in * n_out))
        worst = float(aurocs["value"].min()) if not aurocs.empty else math.nan
        checks.append(
            ("OOD AUROC > 0.5 + 3 sigma", bool(worst > 0.5 + 3 * sigma),
             f"worst {worst:.4f}, bar {0.5 + 3 * sigma:.4f}")
        )

    failed = 0
    print(f"\nDirectional checks over seeds {list(seeds)}:")
    for name, ok, detail in checks:
        failed += not ok
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print(f"\n{len(checks) - failed}/{len(checks)} passed in {time.perf_counter() - start:.0f}s")
    if failed:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
