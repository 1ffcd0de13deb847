"""Pydantic models for run inputs, saved artifacts and reports."""

from __future__ import annotations

import math
from enum import Enum
from fractions import Fraction
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

SCHEMA_VERSION = 1


def _parse_ratio(value: Any) -> Any:
    """Accept ``"1/12"`` style strings next to plain numbers."""
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return value


Ratio = Annotated[float, BeforeValidator(_parse_ratio)]


class LambdaPolicy(str, Enum):
    """How per-order bounds are compared with the budgets."""

    PAPER = "paper"
    PER_ORDER = "per-order"


class DerivativeMethod(str, Enum):
    """How control derivatives are obtained along a trajectory."""

    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"
    BOTH = "both"


class Scenario(str, Enum):
    """Feedback laws that fail to bound the control derivatives."""

    LINEAR_COMBINATION = "linear-combination"
    HARMONIC_OSCILLATOR = "harmonic-oscillator"


class SaturationConstants(BaseModel):
    """The four shape constants of a saturation plus its smoothness order."""

    model_config = ConfigDict(frozen=True)

    sigma_max: Ratio = Field(..., gt=0, examples=[2.0], description="Saturation level.")
    L: Ratio = Field(..., gt=0, examples=[1.0], description="Linearity threshold.")
    S: Ratio = Field(..., gt=0, examples=[2.0], description="Saturation threshold.")
    alpha: Ratio = Field(..., gt=0, examples=[1.0], description="Slope on the linear zone.")
    p: int = Field(..., ge=0, examples=[2], description="Smoothness order (class C^p).")

    @model_validator(mode="after")
    def check_shape(self) -> SaturationConstants:
        """Enforce S >= L, the smoothness rule at S = L and alpha*L <= sigma_max."""
        for name in ("sigma_max", "L", "S", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.S < self.L:
            raise ValueError(f"S ({self.S}) must be >= L ({self.L})")
        if self.S == self.L and self.p >= 1:
            raise ValueError(
                f"smoothness: S = L admits no C^{self.p} blend between the linear "
                "and the saturated zone; enlarge S"
            )
        if self.alpha * self.L > self.sigma_max * (1.0 + 1e-12):
            raise ValueError(
                f"alpha*L ({self.alpha * self.L}) exceeds sigma_max ({self.sigma_max})"
            )
        if self.S == self.L and not math.isclose(
            self.alpha * self.L, self.sigma_max, rel_tol=1e-12
        ):
            raise ValueError("continuity: S = L requires alpha*L = sigma_max")
        return self


class PieceSpec(BaseModel):
    """One polynomial piece on ``[from, to]`` in the power basis of ``r``."""

    model_config = ConfigDict(populate_by_name=True)

    start: float = Field(..., alias="from", ge=0, description="Left end of the piece.")
    end: float = Field(..., alias="to", description="Right end of the piece.")
    coeffs: list[float] = Field(
        ...,
        min_length=1,
        examples=[[-4.0, 15.0, -18.0, 10.0, -2.0]],
        description="Coefficients c0, c1, ... of the piece polynomial.",
    )

    @model_validator(mode="after")
    def check_interval(self) -> PieceSpec:
        """Reject empty or reversed intervals."""
        if not self.end > self.start:
            raise ValueError(f"piece interval [{self.start}, {self.end}] is empty")
        return self


class SaturationSpec(BaseModel):
    """Serialized saturation. Without ``pieces`` the Hermite blend is built."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    p: int = Field(..., ge=0)
    sigma_max: Ratio = Field(..., gt=0)
    L: Ratio = Field(..., gt=0)
    S: Ratio = Field(..., gt=0)
    alpha: Ratio = Field(..., gt=0)
    pieces: list[PieceSpec] | None = Field(
        default=None, description="Pieces covering [0, S]; absent means Hermite construction."
    )

    def constants(self) -> SaturationConstants:
        return SaturationConstants(
            sigma_max=self.sigma_max, L=self.L, S=self.S, alpha=self.alpha, p=self.p
        )


class SynthesisConfig(BaseModel):
    """Input of the synthesis pipeline."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    n: int = Field(..., ge=1, description="Length of the integrator chain.")
    p: int = Field(..., ge=0, description="Number of bounded control derivatives.")
    budgets: list[Ratio] = Field(
        ...,
        examples=[[2.0, 20.0, 18.0]],
        description="R_0..R_p: amplitude budget followed by derivative budgets.",
    )
    saturations: list[SaturationSpec] = Field(
        ..., description="sigma_1..sigma_n, innermost first."
    )
    safety_factor: Ratio = Field(
        default=0.8, gt=0, lt=1, description="Fraction of each strict inner bound used."
    )
    lambda_policy: LambdaPolicy = Field(default=LambdaPolicy.PER_ORDER)
    inner_max: list[Ratio] | None = Field(
        default=None,
        examples=[["1/12", "2/5"]],
        description="Overrides for mu_1^max..mu_{n-1}^max.",
    )
    lambda_value: Ratio | None = Field(
        default=None, ge=1, description="Fixed lambda; skips the lambda search."
    )

    @field_validator("budgets")
    @classmethod
    def validate_budgets(cls, v: list[float]) -> list[float]:
        """Every budget must be positive and finite."""
        if any(not (math.isfinite(r) and r > 0) for r in v):
            raise ValueError(f"budgets must be positive and finite: {v}")
        return v

    @model_validator(mode="after")
    def check_lengths(self) -> SynthesisConfig:
        """Tie budgets, saturations and overrides to n and p."""
        if len(self.budgets) != self.p + 1:
            raise ValueError(
                f"expected {self.p + 1} budgets R_0..R_{self.p}, got {len(self.budgets)}"
            )
        if len(self.saturations) != self.n:
            raise ValueError(f"expected {self.n} saturations, got {len(self.saturations)}")
        for i, spec in enumerate(self.saturations, start=1):
            if spec.p < self.p:
                raise ValueError(
                    f"smoothness: sigma_{i} is only of class C^{spec.p}, order {self.p} required"
                )
        if self.inner_max is not None:
            if len(self.inner_max) != self.n - 1:
                raise ValueError(
                    f"inner_max needs {self.n - 1} entries, got {len(self.inner_max)}"
                )
            if any(not m > 0 for m in self.inner_max):
                raise ValueError("inner_max entries must be positive")
        return self


class SimConfig(BaseModel):
    """Closed-loop simulation settings."""

    step: float | None = Field(
        default=None, gt=0, description="Fixed step; default 0.01/alpha_mu_n."
    )
    horizon: float = Field(default=600.0, gt=0)
    settle_tolerance: float = Field(default=1e-3, gt=0)
    derivative_method: DerivativeMethod = Field(default=DerivativeMethod.ANALYTIC)
    integrator_order: Literal[4] = 4


class CheckResult(BaseModel):
    """Outcome of one named condition."""

    name: str
    passed: bool
    detail: str = ""
    location: float | None = None
    value: float | None = None


class ValidationReport(BaseModel):
    """Collection of checks on a saturation."""

    order: int
    checks: list[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def check(self, name: str) -> list[CheckResult]:
        return [c for c in self.checks if c.name == name]


class StabilityCondition(BaseModel):
    """One inner-chain condition, indexed by ``i`` in 1..n-1."""

    index: int
    kind: Literal["unit-slope", "nesting"]
    passed: bool
    margin: float


class StabilityReport(BaseModel):
    conditions: list[StabilityCondition] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)


class BoundTablesDocument(BaseModel):
    """JSON form of the bound tables; ``Y[i-1][j-1]`` holds Y_{i,j}."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    n: int
    p: int
    Y: list[list[float]]
    Z: list[list[float]]
    G: list[list[float]]
    u_bound: list[float]


class ChainConstants(BaseModel):
    """(mu_i^max, L_{mu_i}) of one internal saturation."""

    mu_max: float = Field(..., gt=0)
    L: float = Field(..., gt=0)


class LawDocument(BaseModel):
    """Versioned on-disk form of a synthesized nested feedback law."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    n: int = Field(..., ge=1)
    p: int = Field(..., ge=0)
    lambda_value: float = Field(..., ge=1)
    lambda_policy: LambdaPolicy
    budgets: list[float]
    a: list[float]
    k: list[list[float]]
    H: list[list[float]]
    alpha_mu_n: float = Field(..., gt=0)
    saturations: list[SaturationSpec]
    chain: list[ChainConstants]
    bounds: BoundTablesDocument


class PeakEstimate(BaseModel):
    """Local maximum of |u^(j)| refined by a quadratic through three samples."""

    time: float
    value: float


class VerificationReport(BaseModel):
    """Measured suprema against budgets and a-priori bounds."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    sup_abs_u: float
    sup_abs_u_deriv: list[float]
    budgets: list[float]
    budget_pass: list[bool] = Field(description="Index 0 is the amplitude, j the j-th derivative.")
    u_bound: list[float]
    bound_soundness: list[bool]
    peaks: list[list[PeakEstimate]] = Field(default_factory=list)
    settle_time: float | None = None
    linear_region_entry: float | None = None
    derivative_discrepancy: list[float] | None = None

    @property
    def within_budget(self) -> bool:
        return all(self.budget_pass)

    @property
    def passed(self) -> bool:
        return self.within_budget and all(self.bound_soundness)


class BatteryReport(BaseModel):
    """Aggregate of a seeded random battery."""

    seed: int
    runs: int
    radius: float
    settled: int
    within_budget: int
    sound: int
    horizon: float
    settle_horizon: float = Field(description="Largest settle-time estimate over the drawn states")
    reports: list[VerificationReport]

    @property
    def passed(self) -> bool:
        """Every run inside the budgets and under the a-priori bounds.

        Settling is counted but not required: from far states the outer layer
        drifts for about ``settle_horizon``, which can exceed the horizon.
        """
        return self.within_budget == self.runs and self.sound == self.runs


class CounterexampleConfig(BaseModel):
    """Fixed gains of the counterexample laws and the contrast synthesis."""

    a: float = Field(default=1.0, gt=0)
    b: float = Field(default=1.0, gt=0)
    c: float = Field(default=1.0, gt=0)
    d: float = Field(default=1.0, gt=0)
    saturation: SaturationSpec = Field(
        default_factory=lambda: SaturationSpec(p=2, sigma_max=2.0, L=1.0, S=2.0, alpha=1.0)
    )
    horizon: float = Field(default=20.0, gt=0)
    step: float = Field(default=0.01, gt=0)
    contrast_budgets: list[float] = Field(default_factory=lambda: [2.0, 20.0], min_length=2)


class GrowthRow(BaseModel):
    """One rung of the initial-condition ladder."""

    scale: float
    initial_rate: float
    predicted_initial_rate: float
    sup_abs_u_dot: float
    contrast_sup_abs_u_dot: float
    contrast_u_bound: float


class GrowthReport(BaseModel):
    scenario: Scenario
    rows: list[GrowthRow]

    @property
    def growth_factors(self) -> list[float]:
        factors: list[float] = []
        for prev, row in zip(self.rows, self.rows[1:], strict=False):
            factors.append(row.initial_rate / prev.initial_rate if prev.initial_rate else math.inf)
        return factors

    @property
    def monotone(self) -> bool:
        return all(
            row.initial_rate > prev.initial_rate
            for prev, row in zip(self.rows, self.rows[1:], strict=False)
        )

    @property
    def contrast_bounded(self) -> bool:
        return all(
            row.contrast_sup_abs_u_dot <= row.contrast_u_bound * (1.0 + 1e-6) for row in self.rows
        )


class RunManifest(BaseModel):
    """Provenance of one CLI invocation."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    tool_version: str
    subcommand: str
    config_digest: str | None = None
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    duration_s: float = 0.0
    seed: int | None = None


__all__ = [
    "SCHEMA_VERSION",
    "BatteryReport",
    "BoundTablesDocument",
    "ChainConstants",
    "CheckResult",
    "CounterexampleConfig",
    "DerivativeMethod",
    "GrowthReport",
    "GrowthRow",
    "LambdaPolicy",
    "LawDocument",
    "PeakEstimate",
    "PieceSpec",
    "Ratio",
    "RunManifest",
    "SaturationConstants",
    "SaturationSpec",
    "Scenario",
    "SimConfig",
    "StabilityCondition",
    "StabilityReport",
    "SynthesisConfig",
    "ValidationReport",
    "VerificationReport",
]
