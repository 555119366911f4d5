"""
Run manifest.

manifest.json records the fully resolved config (after overrides), the
seed, the command and a sha256 per artifact. Passing the manifest back as
the config file re-runs the same experiment.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime

try:
    from datetime import UTC
except ImportError:  # Python < 3.11
    from datetime import timezone

    UTC = timezone.utc
from importlib import metadata
from pathlib import Path
from typing import Any

from app.config.schemas import ExperimentConfig

MANIFEST_NAME = "manifest.json"

# Deterministic outputs; logs/ (timings, timestamps) is left out.
HASHED_DIRS = ("checkpoints", "metrics")

_VERSIONED = ("numpy", "scipy", "scikit-learn", "pandas", "pydantic")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def artifact_hashes(run_dir: Path) -> dict[str, str]:
    hashes: dict[str, str] = {}
    for name in HASHED_DIRS:
        root = run_dir / name
        if not root.exists():
            continue
        for path in sorted(p for p in root.rglob("*") if p.is_file()):
            hashes[path.relative_to(run_dir).as_posix()] = sha256_file(path)
    return hashes


def _versions() -> dict[str, str]:
    out = {}
    for dist in _VERSIONED:
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "missing"
    return out


def write_manifest(
    run_dir: Path,
    *,
    command: str,
    cfg: ExperimentConfig,
    config_source: Path | None,
    overrides: list[str],
    extra: dict[str, Any] | None = None,
) -> Path:
    manifest = {
        "created_at": datetime.now(UTC).isoformat(),
        "command": command,
        "config_source": str(config_source) if config_source else None,
        "overrides": overrides,
        "seed": cfg.train.seed,
        "config": cfg.model_dump(mode="json"),
        "artifacts": artifact_hashes(run_dir),
        "versions": _versions(),
        **(extra or {}),
    }
    path = run_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path
