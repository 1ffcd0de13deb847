"""Core configuration utilities for satstack runs."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

ENV_FILE_CANDIDATES = [".env", ".env.local"]


class SatStackSettings(BaseSettings):
    """Runtime configuration sourced from environment variables."""

    log: str = "INFO"
    seed: int = 0
    battery_runs: int = Field(default=100, ge=1)
    battery_radius: float = Field(default=1000.0, gt=0.0)
    out_dir: Path = Path("runs")

    model_config = SettingsConfigDict(env_prefix="SATSTACK_", case_sensitive=False)


def load_environment() -> None:
    """Load environment variables from the first existing ``.env`` file."""

    for candidate in ENV_FILE_CANDIDATES:
        path = Path(candidate)
        if path.exists():
            load_dotenv(path)
            break


@lru_cache(maxsize=1)
def get_config() -> SatStackSettings:
    """Return cached settings built from environment variables."""

    load_environment()
    return SatStackSettings()


__all__ = ["ENV_FILE_CANDIDATES", "SatStackSettings", "get_config", "load_environment"]
