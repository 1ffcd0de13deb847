"""Core package for satstack utilities.

This package centralizes configuration loading and structured logging helpers
used throughout the project.
"""

from __future__ import annotations

from .config import SatStackSettings, get_config, load_environment
from .logging import configure_logging

__all__ = [
    "SatStackSettings",
    "get_config",
    "load_environment",
    "configure_logging",
]
