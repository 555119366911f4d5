"""
Process-level settings.

Experiment parameters live in the config file (see app.config.schemas);
this holds what belongs to the environment: log level, output root,
worker count and the DCA_SEED fallback.
"""
from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def _default_project_root() -> Path:
    return Path(__file__).resolve().parents[2]


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Environment
    env: str = Field(default="local", validation_alias="ENV")
    log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")

    # Paths
    project_root: Path = Field(default_factory=_default_project_root)
    out_dir: Path = Field(
        default_factory=lambda: _default_project_root() / "out",
        validation_alias="DCA_OUT_DIR",
    )

    # Seed of last resort: used only when neither the config file nor a
    # command-line override sets train.seed.
    dca_seed: int | None = Field(default=None, validation_alias="DCA_SEED")

    # Harness
    workers: int = Field(default=1, ge=1, validation_alias="DCA_WORKERS")

    # Run lock
    lock_retry_attempts: int = 3
    lock_retry_wait_seconds: float = 0.2


@lru_cache
def get_settings() -> Settings:
    return Settings()
