from __future__ import annotations

import json

import pandas as pd
import pytest

from app.cli.main import main


def _train(smoke_config, out_dir, *extra):
    return main(["train", str(smoke_config), *extra, "--out-dir", str(out_dir)])


def test_train_then_evaluate_the_checkpoint(tmp_path, smoke_config, capsys):
    assert _train(smoke_config, tmp_path) == 0
    run_dir = tmp_path / "smoke"
    checkpoint = run_dir / "checkpoints" / "dca-layerwise-cel-n2.seed0.ckpt"
    assert checkpoint.exists()
    assert (run_dir / "logs" / "train_log.csv").exists()
    assert (run_dir / "logs" / "run.log").exists()
    assert not (run_dir / ".lock").exists()

    code = main([
        "eval", str(smoke_config), "--out-dir", str(tmp_path), "--checkpoint", str(checkpoint),
    ])
    assert code == 0
    report = json.loads((run_dir / "metrics" / "eval.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["ood"] is not None
    assert "accuracy=" in capsys.readouterr().out


def test_single_instance_bank_exits_with_config_error(tmp_path, smoke_config, capsys):
    code = _train(smoke_config, tmp_path, "dca.granularity=layer", "dca.n=1")
    assert code == 1
    assert "n >= 2" in capsys.readouterr().err


def test_unknown_key_is_named(tmp_path, smoke_config, capsys):
    assert _train(smoke_config, tmp_path, "train.learning_rate=0.1") == 1
    assert "train.learning_rate" in capsys.readouterr().err


@pytest.mark.parametrize(
    ("byte", "readable"), [(4, False), (40, True)], ids=["header", "payload"]
)
def test_corrupted_checkpoint_is_a_format_error(tmp_path, smoke_config, capsys, byte, readable):
    _train(smoke_config, tmp_path)
    checkpoint = tmp_path / "smoke" / "checkpoints" / "dca-layerwise-cel-n2.seed0.ckpt"
    blob = bytearray(checkpoint.read_bytes())
    blob[byte] ^= 0xFF
    checkpoint.write_bytes(bytes(blob))
    capsys.readouterr()

    assert main(["inspect-checkpoint", str(checkpoint)]) == 2
    captured = capsys.readouterr()
    assert ("MISMATCH" in captured.out) is readable
    assert "CRC mismatch" in captured.err

    code = main([
        "eval", str(smoke_config), "--out-dir", str(tmp_path), "--checkpoint", str(checkpoint),
    ])
    assert code == 2
    assert "CRC mismatch" in capsys.readouterr().err


def test_intact_checkpoint_inspects_cleanly(tmp_path, smoke_config, capsys):
    _train(smoke_config, tmp_path)
    checkpoint = tmp_path / "smoke" / "checkpoints" / "dca-layerwise-cel-n2.seed0.ckpt"
    capsys.readouterr()
    assert main(["inspect-checkpoint", str(checkpoint)]) == 0
    assert "layerwise" in capsys.readouterr().out


def test_manifest_replays_to_identical_checkpoints(tmp_path, smoke_config):
    first, second = tmp_path / "first", tmp_path / "second"
    assert _train(smoke_config, first, "train.lr=0.1", "--run-name", "replay") == 0
    manifest = json.loads((first / "replay" / "manifest.json").read_text())
    assert manifest["overrides"] == ["train.lr=0.1", "run.name=replay"]
    assert manifest["seed"] == 0
    assert manifest["config"]["train"]["lr"] == 0.1

    code = main(["train", str(first / "replay" / "manifest.json"), "--out-dir", str(second)])
    assert code == 0
    replayed = json.loads((second / "replay" / "manifest.json").read_text())
    checkpoints = {k: v for k, v in manifest["artifacts"].items() if k.startswith("checkpoints/")}
    assert checkpoints
    assert {
        k: v for k, v in replayed["artifacts"].items() if k.startswith("checkpoints/")
    } == checkpoints


def test_held_lock_refuses_the_run(tmp_path, smoke_config, capsys):
    run_dir = tmp_path / "smoke"
    run_dir.mkdir()
    (run_dir / ".lock").write_text("4242")
    assert _train(smoke_config, tmp_path) == 1
    assert "4242" in capsys.readouterr().err
    assert (run_dir / ".lock").exists()


def test_shift_writes_every_severity(tmp_path, smoke_config):
    assert main(["shift", str(smoke_config), "--out-dir", str(tmp_path)]) == 0
    metrics = tmp_path / "smoke" / "metrics"
    table = pd.read_csv(metrics / "shift.csv")
    assert set(table["severity"]) == {0, 5}
    assert (metrics / "indomain.csv").exists()
    assert "violations" in json.loads((metrics / "shift.json").read_text())


def test_ood_writes_roc_points(tmp_path, smoke_config):
    assert main(["ood", str(smoke_config), "--out-dir", str(tmp_path)]) == 0
    roc = pd.read_csv(tmp_path / "smoke" / "metrics" / "ood_roc.csv")
    assert {"fpr", "tpr", "threshold"} <= set(roc.columns)


@pytest.mark.slow
def test_instance_count_ablation(tmp_path, smoke_config):
    code = main([
        "ablate", str(smoke_config), "--out-dir", str(tmp_path), "--axis", "instance_count",
    ])
    assert code == 0
    table = pd.read_csv(tmp_path / "smoke" / "metrics" / "ablate_instance_count.csv")
    assert sorted(set(table["n"])) == [2, 3]


@pytest.mark.slow
def test_diversity_command(tmp_path, smoke_config):
    assert main(["diversity", str(smoke_config), "--out-dir", str(tmp_path)]) == 0
    diversity = pd.read_csv(tmp_path / "smoke" / "metrics" / "diversity.csv")
    assert diversity["loss"].tolist() == ["nll", "cel"]
