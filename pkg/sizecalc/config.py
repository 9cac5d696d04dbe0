"""Runtime configuration."""

from __future__ import annotations

from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_SEED = 20240601


class Settings(BaseSettings):
    """Runtime defaults loaded from SIZECALC_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="SIZECALC_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: str = "INFO"
    seed: int = DEFAULT_SEED
    workers: int = Field(default=1, ge=1)
    n_sim: int | None = Field(default=None, ge=100)
    n_val: int = Field(default=50_000, ge=10_000)
    mc_size: int = Field(default=1_000_000, ge=100_000)
    lsf_bootstraps: int = Field(default=200, ge=50)
    adjust_threshold: float = Field(default=0.8, gt=0.5, le=1.0)
    metrics_path: str | None = None

    @field_validator("log_level", mode="before")
    @classmethod
    def _normalize_log_level(cls, value: object) -> str:
        """Accept lower-case level names from env."""
        if value is None:
            return "INFO"
        return str(value).strip().upper()


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return cached runtime settings."""
    return Settings()
