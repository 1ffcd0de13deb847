"""Synthesis commands: build a law from a config and sweep the lambda bounds."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import structlog

from satstack.models import LambdaPolicy, SynthesisConfig
from satstack.monitoring import monitor_performance
from satstack.synthesis import (
    NestedFeedbackLaw,
    assemble_feedback,
    choose_inner_constants,
    lambda_bounds,
    lambda_targets,
    law_to_document,
)
from satstack.utils import format_json, read_json, write_csv_atomic, write_text_atomic

logger = structlog.get_logger(__name__)

LAW_FILE = "law.json"
BOUNDS_FILE = "bounds.json"
SWEEP_FILE = "lambda_sweep.csv"


def load_synthesis_config(path: Path, policy: LambdaPolicy | None = None) -> SynthesisConfig:
    """Read and validate a synthesis config; ``policy`` overrides the file's choice."""
    config = SynthesisConfig.model_validate(read_json(path))
    if policy is not None:
        config = config.model_copy(update={"lambda_policy": policy})
    return config


@dataclass(frozen=True)
class SynthesisResult:
    law: NestedFeedbackLaw
    law_path: Path
    bounds_path: Path

    def summary(self) -> dict[str, Any]:
        law = self.law
        return {
            "n": law.n,
            "p": law.p,
            "lambda": law.lambda_value,
            "lambda_policy": law.lambda_policy.value,
            "a": law.a.tolist(),
            "k": law.k.tolist(),
            "u_bound": law.bounds.u_bound.tolist(),
            "budgets": list(law.budgets),
            "amplitude": law.amplitude,
        }


@monitor_performance
def cmd_synthesize(
    config_path: Path, out_dir: Path, policy: LambdaPolicy | None = None
) -> SynthesisResult:
    """Write ``law.json`` and ``bounds.json`` for the config at ``config_path``."""
    config = load_synthesis_config(config_path, policy)
    law = assemble_feedback(config)
    document = law_to_document(law)
    law_path = write_text_atomic(out_dir / LAW_FILE, format_json(document.model_dump(mode="json")) + "\n")
    bounds_path = write_text_atomic(
        out_dir / BOUNDS_FILE, format_json(document.bounds.model_dump(mode="json")) + "\n"
    )
    logger.info("law written", path=str(law_path), lambda_value=law.lambda_value)
    return SynthesisResult(law=law, law_path=law_path, bounds_path=bounds_path)


def sweep_rows(config: SynthesisConfig, lambdas: Sequence[float]) -> list[list[float]]:
    """One row ``[lambda, u_bound_1, ..., u_bound_p]`` per grid value."""
    if any(not lam >= 1.0 for lam in lambdas):
        raise ValueError(f"lambda values must be >= 1, got {list(lambdas)}")
    polys = lambda_bounds(config, choose_inner_constants(config))
    return [[float(lam), *(poly(lam) for poly in polys)] for lam in lambdas]


@monitor_performance
def cmd_sweep_lambda(
    config_path: Path,
    lambdas: Sequence[float],
    out_dir: Path,
    policy: LambdaPolicy | None = None,
) -> Path:
    """Write the per-order bounds over a lambda grid as CSV."""
    config = load_synthesis_config(config_path, policy)
    rows = sweep_rows(config, lambdas)
    header = ["lambda", *(f"u_bound_{j}" for j in range(1, config.p + 1))]
    path = write_csv_atomic(out_dir / SWEEP_FILE, header, rows)
    logger.info("lambda sweep written", path=str(path), targets=lambda_targets(config))
    return path


__all__ = [
    "BOUNDS_FILE",
    "LAW_FILE",
    "SWEEP_FILE",
    "SynthesisResult",
    "cmd_sweep_lambda",
    "cmd_synthesize",
    "load_synthesis_config",
    "sweep_rows",
]
