"""Command implementations behind the ``satstack`` CLI.

Each module groups one family of subcommands; ``cli.py`` registers them.
"""

from __future__ import annotations

from .simulation_commands import (
    cmd_battery,
    cmd_demo_counterexample,
    cmd_simulate,
    cmd_verify,
    load_law,
)
from .synthesis_commands import cmd_sweep_lambda, cmd_synthesize, load_synthesis_config

__all__ = [
    "cmd_battery",
    "cmd_demo_counterexample",
    "cmd_simulate",
    "cmd_sweep_lambda",
    "cmd_synthesize",
    "cmd_verify",
    "load_law",
    "load_synthesis_config",
]
