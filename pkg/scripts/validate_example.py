"""Synthesize the shipped triple-integrator example and print a summary.

Usage:
    uv run validate-example
    # or
    uv run python scripts/validate_example.py
"""

from __future__ import annotations

import json
from pathlib import Path

from satstack.commands import load_synthesis_config
from satstack.synthesis import assemble_feedback, lambda_bounds

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "triple_integrator.json"
LAMBDAS = (2.0, 6.5, 10.0)


def main() -> None:
    """Build the law at lambda = 6.5 and list its bounds over a few lambdas."""
    config = load_synthesis_config(CONFIG)
    law = assemble_feedback(config)
    polys = lambda_bounds(config)
    summary = {
        "lambda": law.lambda_value,
        "a": law.a.tolist(),
        "k": law.k.tolist(),
        "u_bound": law.bounds.u_bound.tolist(),
        "budgets": list(law.budgets),
        "bounds_by_lambda": {str(lam): [poly(lam) for poly in polys] for lam in LAMBDAS},
    }
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":  # pragma: no cover
    main()
