"""Pytest fixtures and configuration."""

import sys
from collections.abc import Generator
from pathlib import Path

import pytest

# Add src to path for imports
PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT / "src"))

from satstack.core import get_config  # noqa: E402
from satstack.models import PieceSpec, SaturationConstants, SynthesisConfig  # noqa: E402
from satstack.saturation import SaturationFunction, load_explicit_saturation  # noqa: E402
from satstack.synthesis import NestedFeedbackLaw, assemble_feedback  # noqa: E402
from satstack.utils import read_json  # noqa: E402

CONFIG_DIR = PROJECT_ROOT / "configs"
WORKED_X0 = (446.7937, -69.875, 11.05)
WORKED_PIECES = [
    PieceSpec(start=1.0, end=1.5, coeffs=[-4.0, 15.0, -18.0, 10.0, -2.0]),
    PieceSpec(start=1.5, end=2.0, coeffs=[50.0, -120.0, 108.0, -42.0, 6.0]),
]


@pytest.fixture(autouse=True)
def fresh_settings() -> Generator[None]:
    """Settings are cached per process; tests that patch the environment need a reset."""
    get_config.cache_clear()
    yield
    get_config.cache_clear()


@pytest.fixture(scope="session")
def worked_constants() -> SaturationConstants:
    return SaturationConstants(sigma_max=2.0, L=1.0, S=2.0, alpha=1.0, p=2)


@pytest.fixture(scope="session")
def worked_sigma(worked_constants: SaturationConstants) -> SaturationFunction:
    """Quartic-blend saturation with constants (2, 1, 2, 1), class C^2."""
    return load_explicit_saturation(WORKED_PIECES, worked_constants)


@pytest.fixture(scope="session")
def worked_config_path() -> Path:
    return CONFIG_DIR / "triple_integrator.json"


@pytest.fixture(scope="session")
def worked_config(worked_config_path: Path) -> SynthesisConfig:
    """Triple integrator, budgets (2, 20, 18), lambda fixed at 6.5."""
    return SynthesisConfig.model_validate(read_json(worked_config_path))


@pytest.fixture(scope="session")
def worked_law(worked_config: SynthesisConfig) -> NestedFeedbackLaw:
    return assemble_feedback(worked_config)
