"""satstack: nested-saturation feedback with bounded control derivatives.

The package synthesizes static feedback laws for chains of integrators whose
control amplitude and first p time derivatives stay below prescribed budgets,
and simulates the closed loop to check them.
"""

from __future__ import annotations

from .models import LawDocument, SaturationSpec, SimConfig, SynthesisConfig

__version__ = "0.1.0"
__all__ = ["LawDocument", "SaturationSpec", "SimConfig", "SynthesisConfig", "__version__"]
