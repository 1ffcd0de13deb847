"""Performance monitoring for synthesis and simulation runs."""

from __future__ import annotations

import time
from collections.abc import Callable
from functools import wraps
from typing import ParamSpec, TypeVar

import structlog

P = ParamSpec("P")
R = TypeVar("R")

logger = structlog.get_logger(__name__)


class Stopwatch:
    """Context manager measuring wall-clock time in seconds."""

    def __init__(self) -> None:
        self.start = 0.0
        self.elapsed = 0.0

    def __enter__(self) -> Stopwatch:
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.elapsed = time.perf_counter() - self.start


def monitor_performance(func: Callable[P, R]) -> Callable[P, R]:  # noqa: UP047
    """Decorator logging the duration of the wrapped call."""

    @wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        start_time = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            duration = time.perf_counter() - start_time
            logger.info(
                "operation completed",
                operation=func.__name__,
                duration_ms=round(duration * 1000, 3),
            )

    return wrapper


__all__ = ["Stopwatch", "monitor_performance"]
