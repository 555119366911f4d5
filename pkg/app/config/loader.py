"""
Flat config files.

Format: UTF-8 `key = value` lines, `#` starts a comment, dotted keys name
the section (`train.lr = 0.1`). Command-line overrides use the same
`key=value` form and are applied after the file is parsed. A run's
`manifest.json` is accepted too, so a finished run can be replayed.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.config.schemas import ExperimentConfig
from app.config.settings import Settings, get_settings
from app.core.types import ConfigError

logger = logging.getLogger(__name__)

_NULLS = {"none", "null", "~"}


def _parse_value(raw: str) -> Any:
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in {'"', "'"}:
        return value[1:-1]
    if value.lower() in _NULLS:
        return None
    return value


def _assign(tree: dict[str, Any], dotted: str, value: Any, *, where: str) -> None:
    parts = [p.strip() for p in dotted.split(".")]
    if not all(parts):
        raise ConfigError(f"{where}: malformed key {dotted!r}.")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{where}: key {dotted!r} nests under a scalar value.")
        node = child
    node[parts[-1]] = value


def parse_flat_config(text: str, *, source: str = "<config>") -> dict[str, Any]:
    tree: dict[str, Any] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}.")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}.")
        seen.add(key)
        _assign(tree, key, _parse_value(value), where=f"{source}:{lineno}")
    return tree


def apply_overrides(tree: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override {item!r} must look like key=value.")
        key, value = item.split("=", 1)
        _assign(tree, key.strip(), _parse_value(value), where=f"override {item!r}")
    return tree


def _read_tree(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e}).") from e
        # A run manifest nests the resolved config under "config".
        return dict(payload.get("config", payload))
    return parse_flat_config(text, source=str(path))


def build_config(tree: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        problems = []
        for err in e.errors():
            key = ".".join(str(p) for p in err["loc"])
            if err["type"] == "extra_forbidden":
                problems.append(f"unknown key {key!r}")
            else:
                problems.append(f"{key}: {err['msg']}")
        raise ConfigError("Invalid config: " + "; ".join(problems)) from e


def load_config(
    path: Path,
    overrides: Sequence[str] = (),
    *,
    settings: Settings | None = None,
) -> ExperimentConfig:
    """
    Parse, override, validate, then resolve the seed: config file, then
    override, then the DCA_SEED environment variable, then 0.
    """
    settings = settings or get_settings()
    tree = apply_overrides(_read_tree(path), overrides)
    cfg = build_config(tree)
    if cfg.train.seed is None:
        seed = settings.dca_seed if settings.dca_seed is not None else 0
        source = "DCA_SEED" if settings.dca_seed is not None else "default"
        logger.info("train.seed not set; using %d (%s).", seed, source)
        cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"seed": seed})})
    return cfg
