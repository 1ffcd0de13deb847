"""Command-line entry point for satstack.

Exit codes: 0 pass, 2 budget violation, 3 invalid input, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import structlog

from satstack import __version__
from satstack.commands import (
    cmd_battery,
    cmd_demo_counterexample,
    cmd_simulate,
    cmd_sweep_lambda,
    cmd_synthesize,
    cmd_verify,
)
from satstack.core import SatStackSettings, configure_logging, get_config
from satstack.models import DerivativeMethod, LambdaPolicy, RunManifest, Scenario, SimConfig
from satstack.monitoring import Stopwatch
from satstack.utils import file_digest, format_json, parse_vector, write_text_atomic

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_INVALID = 3
EXIT_IO = 4

MANIFEST_FILE = "manifest.json"

Outcome = tuple[int, dict[str, Any], list[Path]]
Handler = Callable[[argparse.Namespace, SatStackSettings], Outcome]


def _policy(value: str | None) -> LambdaPolicy | None:
    return None if value is None else LambdaPolicy(value)


def _sim_config(args: argparse.Namespace) -> SimConfig:
    fields: dict[str, Any] = {"derivative_method": DerivativeMethod(args.derivatives)}
    if args.step is not None:
        fields["step"] = args.step
    if args.horizon is not None:
        fields["horizon"] = args.horizon
    return SimConfig(**fields)


def _run_synthesize(args: argparse.Namespace, _settings: SatStackSettings) -> Outcome:
    result = cmd_synthesize(args.config, args.out, _policy(args.policy))
    return EXIT_OK, result.summary(), [result.law_path, result.bounds_path]


def _run_sweep(args: argparse.Namespace, _settings: SatStackSettings) -> Outcome:
    lambdas = parse_vector(args.lambdas)
    path = cmd_sweep_lambda(args.config, lambdas, args.out, _policy(args.policy))
    return EXIT_OK, {"lambdas": lambdas, "csv": str(path)}, [path]


def _run_simulate(args: argparse.Namespace, settings: SatStackSettings) -> Outcome:
    sim = _sim_config(args)
    if args.battery is not None:
        radius = args.radius if args.radius is not None else settings.battery_radius
        battery, path = cmd_battery(args.law, args.battery, radius, args.seed, args.out, sim)
        summary = battery.model_dump(mode="json", exclude={"reports"})
        return (EXIT_OK if battery.passed else EXIT_BUDGET), summary, [path]
    if args.x0 is None:
        raise ValueError("simulate needs --x0 or --battery")
    report, paths = cmd_simulate(args.law, parse_vector(args.x0), args.out, sim)
    return (EXIT_OK if report.within_budget else EXIT_BUDGET), report.model_dump(mode="json"), paths


def _run_verify(args: argparse.Namespace, _settings: SatStackSettings) -> Outcome:
    if args.x0 is None:
        raise ValueError("verify needs --x0")
    report, path = cmd_verify(args.law, parse_vector(args.x0), args.out, _sim_config(args))
    return (EXIT_OK if report.passed else EXIT_BUDGET), report.model_dump(mode="json"), [path]


def _run_counterexample(args: argparse.Namespace, _settings: SatStackSettings) -> Outcome:
    scenario = Scenario(args.scenario)
    report, path = cmd_demo_counterexample(scenario, parse_vector(args.scales), args.out)
    summary = {
        "scenario": scenario.value,
        "growth_factors": report.growth_factors,
        "monotone": report.monotone,
        "contrast_bounded": report.contrast_bounded,
    }
    return (EXIT_OK if report.contrast_bounded else EXIT_BUDGET), summary, [path]


def _add_sim_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--law", type=Path, required=True, help="Law JSON written by synthesize")
    sub.add_argument("--x0", help='Initial state "v1,v2,..."')
    sub.add_argument("--step", type=float, default=None, help="Fixed RK4 step")
    sub.add_argument("--horizon", type=float, default=None, help="Simulated time span")
    sub.add_argument(
        "--derivatives",
        default=DerivativeMethod.ANALYTIC.value,
        choices=[m.value for m in DerivativeMethod],
        help="How control derivatives are computed",
    )


def build_parser(settings: SatStackSettings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satstack",
        description="Nested-saturation feedback with bounded control derivatives",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=settings.out_dir, help="Output directory")
    common.add_argument("--seed", type=int, default=settings.seed, help="Battery seed")
    subparsers = parser.add_subparsers(dest="command", required=True)

    synth = subparsers.add_parser("synthesize", parents=[common], help="Build a law from a synthesis config")
    synth.add_argument("--config", type=Path, required=True)
    synth.add_argument("--policy", default=None, choices=[p.value for p in LambdaPolicy])
    synth.set_defaults(handler=_run_synthesize)

    sweep = subparsers.add_parser("sweep-lambda", parents=[common], help="Per-order bounds over a lambda grid")
    sweep.add_argument("--config", type=Path, required=True)
    sweep.add_argument("--lambdas", default="1,2,4,6.5,10", help='Grid "l1,l2,..."')
    sweep.add_argument("--policy", default=None, choices=[p.value for p in LambdaPolicy])
    sweep.set_defaults(handler=_run_sweep)

    simulate = subparsers.add_parser("simulate", parents=[common], help="Trajectory CSV and verification report")
    _add_sim_flags(simulate)
    simulate.add_argument(
        "--battery",
        type=int,
        nargs="?",
        const=settings.battery_runs,
        default=None,
        help="Run a seeded random battery (default size from settings)",
    )
    simulate.add_argument("--radius", type=float, default=None, help="Battery radius")
    simulate.set_defaults(handler=_run_simulate)

    verify = subparsers.add_parser("verify", parents=[common], help="Verification report for one initial state")
    _add_sim_flags(verify)
    verify.set_defaults(handler=_run_verify)

    demo = subparsers.add_parser("demo-counterexample", parents=[common], help="Growth ladder of a counterexample")
    demo.add_argument(
        "--scenario",
        default=Scenario.LINEAR_COMBINATION.value,
        choices=[s.value for s in Scenario],
    )
    demo.add_argument("--scales", default="10,100,1000", help='Scales "s1,s2,..."')
    demo.set_defaults(handler=_run_counterexample)
    return parser


def _input_paths(args: argparse.Namespace) -> dict[str, str]:
    return {
        name: str(getattr(args, name))
        for name in ("config", "law")
        if getattr(args, name, None) is not None
    }


def _write_manifest(
    args: argparse.Namespace, outputs: list[Path], duration: float
) -> Path:
    inputs = _input_paths(args)
    source = getattr(args, "config", None) or getattr(args, "law", None)
    manifest = RunManifest(
        tool_version=__version__,
        subcommand=args.command,
        config_digest=file_digest(source) if source is not None else None,
        inputs=inputs,
        outputs=[str(path) for path in outputs],
        duration_s=duration,
        seed=args.seed if getattr(args, "battery", None) is not None else None,
    )
    return write_text_atomic(
        args.out / MANIFEST_FILE, format_json(manifest.model_dump(mode="json")) + "\n"
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    settings = get_config()
    configure_logging(settings.log)
    try:
        args = build_parser(settings).parse_args(argv)
    except SystemExit as exc:
        # usage errors exit with EXIT_INVALID instead of argparse's 2
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    handler: Handler = args.handler
    try:
        with Stopwatch() as watch:
            code, summary, outputs = handler(args, settings)
        _write_manifest(args, outputs, watch.elapsed)
    except OSError as exc:
        logger.error("i/o failure", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        logger.error("invalid input", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(format_json(summary))
    logger.info("command finished", command=args.command, exit_code=code)
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
