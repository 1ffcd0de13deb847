"""Simulation commands: trajectories, verification reports and counterexample ladders."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import structlog

from satstack.models import (
    BatteryReport,
    CounterexampleConfig,
    GrowthReport,
    LawDocument,
    Scenario,
    SimConfig,
    VerificationReport,
)
from satstack.monitoring import monitor_performance
from satstack.simulate import Trajectory, run_battery, run_counterexample, simulate_and_verify
from satstack.synthesis import NestedFeedbackLaw, law_from_document
from satstack.utils import format_json, read_json, write_csv_atomic, write_text_atomic

logger = structlog.get_logger(__name__)

TRAJECTORY_FILE = "trajectory.csv"
REPORT_FILE = "report.json"
BATTERY_FILE = "battery.json"
GROWTH_FILE = "growth.csv"


def load_law(path: Path) -> NestedFeedbackLaw:
    return law_from_document(LawDocument.model_validate(read_json(path)))


def trajectory_header(n: int, p: int) -> list[str]:
    return [
        "t",
        *(f"x_{i}" for i in range(1, n + 1)),
        "u",
        *(f"du_{j}" for j in range(1, p + 1)),
        *(f"z_{i}" for i in range(1, n + 1)),
    ]


def write_trajectory_csv(path: Path, traj: Trajectory) -> Path:
    n = traj.states.shape[1]
    p = traj.u_derivs.shape[0]
    rows = (
        [
            float(traj.times[m]),
            *(float(v) for v in traj.states[m]),
            float(traj.u[m]),
            *(float(traj.u_derivs[j, m]) for j in range(p)),
            *(float(v) for v in traj.nested_args[m]),
        ]
        for m in range(len(traj.times))
    )
    return write_csv_atomic(path, trajectory_header(n, p), rows)


def _write_model(path: Path, model: VerificationReport | BatteryReport) -> Path:
    return write_text_atomic(path, format_json(model.model_dump(mode="json")) + "\n")


@monitor_performance
def cmd_simulate(
    law_path: Path, x0: Sequence[float], out_dir: Path, sim: SimConfig
) -> tuple[VerificationReport, list[Path]]:
    """Trajectory CSV plus verification report for one initial state."""
    law = load_law(law_path)
    traj, report = simulate_and_verify(law, x0, sim)
    outputs = [
        write_trajectory_csv(out_dir / TRAJECTORY_FILE, traj),
        _write_model(out_dir / REPORT_FILE, report),
    ]
    return report, outputs


@monitor_performance
def cmd_verify(
    law_path: Path, x0: Sequence[float], out_dir: Path, sim: SimConfig
) -> tuple[VerificationReport, Path]:
    """Verification report only."""
    law = load_law(law_path)
    _, report = simulate_and_verify(law, x0, sim)
    return report, _write_model(out_dir / REPORT_FILE, report)


@monitor_performance
def cmd_battery(
    law_path: Path, runs: int, radius: float, seed: int, out_dir: Path, sim: SimConfig
) -> tuple[BatteryReport, Path]:
    """Seeded battery of random initial states."""
    law = load_law(law_path)
    report = run_battery(law, runs, radius, seed, sim)
    return report, _write_model(out_dir / BATTERY_FILE, report)


@monitor_performance
def cmd_demo_counterexample(
    scenario: Scenario,
    scales: Sequence[float],
    out_dir: Path,
    cfg: CounterexampleConfig | None = None,
) -> tuple[GrowthReport, Path]:
    """Growth-ladder CSV of a counterexample scenario with the nested contrast column."""
    report = run_counterexample(scenario, scales, cfg)
    header = [
        "scale",
        "initial_rate",
        "predicted_initial_rate",
        "sup_abs_u_dot",
        "contrast_sup_abs_u_dot",
        "contrast_u_bound",
    ]
    rows = [[getattr(row, name) for name in header] for row in report.rows]
    path = write_csv_atomic(out_dir / GROWTH_FILE, header, rows)
    logger.info("growth ladder written", path=str(path), monotone=report.monotone)
    return report, path


__all__ = [
    "BATTERY_FILE",
    "GROWTH_FILE",
    "REPORT_FILE",
    "TRAJECTORY_FILE",
    "cmd_battery",
    "cmd_demo_counterexample",
    "cmd_simulate",
    "cmd_verify",
    "load_law",
    "trajectory_header",
    "write_trajectory_csv",
]
