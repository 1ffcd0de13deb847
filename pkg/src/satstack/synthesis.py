"""Constructive synthesis of nested-saturation feedback for integrator chains.

Pipeline: pick the inner chain constants, build mu_1..mu_{n-1} by rescaling the
user saturations, select lambda (the linearity threshold of the outer
saturation mu_n) from the bound polynomials, then express the law in the
original coordinates through the binomial coordinate change H.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
import structlog

from satstack.bounds import (
    BoundTables,
    LambdaBoundPolynomial,
    analyze_chain,
    compute_bound_tables,
    lambda_bound_polynomials,
)
from satstack.models import (
    BoundTablesDocument,
    ChainConstants,
    LambdaPolicy,
    LawDocument,
    SaturationSpec,
    StabilityCondition,
    StabilityReport,
    SynthesisConfig,
)
from satstack.monitoring import monitor_performance
from satstack.saturation import (
    SaturationAnalysis,
    SaturationFunction,
    analyze_saturation,
    from_spec,
    rescale,
)

logger = structlog.get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

LAMBDA_TOL = 1e-6
MAX_DOUBLINGS = 60
BUDGET_SLACK = 1e-9
IDENTITY_TOL = 1e-10


class SynthesisError(ValueError):
    """Raised when a configuration cannot produce a valid law."""


# --- inner chain -------------------------------------------------------------------


def choose_inner_constants(config: SynthesisConfig) -> list[ChainConstants]:
    """``(mu_i^max, L_{mu_i})`` for i = 1..n-1, innermost first.

    Defaults take ``safety_factor`` of each strict upper bound; ``inner_max``
    overrides the levels while the thresholds follow from them.
    """
    n = config.n
    if n == 1:
        return []
    chain: list[ChainConstants] = []
    level = (
        config.inner_max[n - 2] if config.inner_max is not None else config.safety_factor * 0.5
    )
    for i in range(n - 1, 0, -1):
        sigma = config.saturations[i - 1]
        threshold = level * sigma.L * sigma.alpha / sigma.sigma_max
        chain.append(ChainConstants(mu_max=level, L=threshold))
        if i > 1:
            level = (
                config.inner_max[i - 2]
                if config.inner_max is not None
                else config.safety_factor * threshold / 2.0
            )
    chain.reverse()
    return chain


def _build_saturations(config: SynthesisConfig) -> list[SaturationFunction]:
    sats = []
    for i, spec in enumerate(config.saturations, start=1):
        try:
            sats.append(from_spec(spec))
        except ValueError as exc:
            raise SynthesisError(f"sigma_{i}: {exc}") from exc
    return sats


def _inner_chain(
    sats: Sequence[SaturationFunction], inner: Sequence[ChainConstants]
) -> list[SaturationFunction]:
    return [rescale(sigma, c.mu_max, c.L) for sigma, c in zip(sats, inner, strict=False)]


def outer_slope(config: SynthesisConfig) -> float:
    """Slope of the outer saturation at lambda = 1: ``R_0 L_sigma_n alpha_sigma_n / sigma_n^max``."""
    outer = config.saturations[-1]
    return config.budgets[0] * outer.L * outer.alpha / outer.sigma_max


def _base_analyses(
    config: SynthesisConfig,
    sats: Sequence[SaturationFunction],
    inner: Sequence[ChainConstants],
) -> list[SaturationAnalysis]:
    """Inner analyses plus the lambda-free outer one (linearity threshold 1)."""
    analyses = analyze_chain(_inner_chain(sats, inner), config.p)
    prev_max = inner[-1].mu_max if inner else 0.0
    normalized = rescale(sats[-1], config.budgets[0], 1.0)
    analyses.append(analyze_saturation(normalized, prev_max, order=config.p))
    return analyses


def lambda_bounds(
    config: SynthesisConfig, inner: Sequence[ChainConstants] | None = None
) -> list[LambdaBoundPolynomial]:
    """Per-order derivative bounds of the configured chain as functions of lambda."""
    inner = choose_inner_constants(config) if inner is None else inner
    sats = _build_saturations(config)
    return lambda_bound_polynomials(_base_analyses(config, sats, inner), config.n, config.p)


def lambda_targets(config: SynthesisConfig) -> list[float]:
    """Budget each derivative bound is compared with under the configured policy."""
    derivative_budgets = list(config.budgets[1:])
    if config.lambda_policy is LambdaPolicy.PAPER and derivative_budgets:
        return [min(derivative_budgets)] * len(derivative_budgets)
    return derivative_budgets


def select_lambda(
    config: SynthesisConfig,
    inner_constants: Sequence[ChainConstants],
    *,
    tol: float = LAMBDA_TOL,
) -> float:
    """Smallest lambda >= 1, up to ``tol``, whose bounds meet every target."""
    if config.p == 0:
        return 1.0
    polys = lambda_bounds(config, inner_constants)
    targets = lambda_targets(config)

    def feasible(lam: float) -> bool:
        return all(poly(lam) <= target for poly, target in zip(polys, targets, strict=True))

    if feasible(1.0):
        return 1.0
    lo, hi = 1.0, 2.0
    for _ in range(MAX_DOUBLINGS):
        if feasible(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SynthesisError(f"no feasible lambda below {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    logger.info(
        "lambda selected",
        lambda_value=hi,
        policy=config.lambda_policy.value,
        bounds=[poly(hi) for poly in polys],
        targets=targets,
    )
    return hi


# --- coordinates -------------------------------------------------------------------


def chain_matrix(n: int) -> FloatArray:
    """Shift matrix of the integrator chain, ``x_i' = x_{i+1}``."""
    return np.eye(n, k=1)


def nesting_matrix(n: int) -> FloatArray:
    """Strictly upper triangular all-ones matrix."""
    return np.triu(np.ones((n, n)), k=1)


@dataclass(frozen=True)
class CoordinateChange:
    """``y = H x`` with ``y_{n-i} = sum_k C(i, k) alpha^k x_{n-k}``."""

    H: FloatArray
    alpha_mu_n: float

    @property
    def n(self) -> int:
        return int(self.H.shape[0])

    def apply(self, x: FloatArray) -> FloatArray:
        """Map states (last axis of length n) to y-coordinates."""
        return np.asarray(x, dtype=float) @ self.H.T

    def conjugation_residual(self) -> float:
        """``max |H J - alpha N H|``; zero iff ``H J H^-1 = alpha N``."""
        n = self.n
        lhs = self.H @ chain_matrix(n)
        rhs = self.alpha_mu_n * nesting_matrix(n) @ self.H
        return float(np.max(np.abs(lhs - rhs), initial=0.0))

    def input_residual(self) -> float:
        """``max |H e_n - 1|``."""
        return float(np.max(np.abs(self.H[:, -1] - 1.0)))


def coordinate_change(n: int, alpha_mu_n: float) -> CoordinateChange:
    if n < 1:
        raise ValueError(f"chain length must be >= 1, got {n}")
    if not alpha_mu_n > 0:
        raise ValueError(f"alpha_mu_n must be positive, got {alpha_mu_n}")
    H = np.zeros((n, n))
    for i in range(n):
        for k in range(i + 1):
            H[n - 1 - i, n - 1 - k] = math.comb(i, k) * alpha_mu_n**k
    change = CoordinateChange(H=H, alpha_mu_n=alpha_mu_n)
    scale = max(1.0, alpha_mu_n) ** n
    if change.conjugation_residual() > IDENTITY_TOL * scale or change.input_residual() > 1e-12:
        raise SynthesisError("coordinate change does not conjugate the chain")
    return change


# --- the law -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NestedFeedbackLaw:
    """``nu(x) = -a_n sigma_n(k_n x + a_{n-1} sigma_{n-1}(... + a_1 sigma_1(k_1 x)))``.

    ``k[i-1]`` is the row vector k_i. ``mu_chain`` holds mu_1..mu_n, the same law
    read in y-coordinates.
    """

    a: FloatArray
    k: FloatArray
    sats: tuple[SaturationFunction, ...]
    mu_chain: tuple[SaturationFunction, ...]
    coordinates: CoordinateChange
    lambda_value: float
    lambda_policy: LambdaPolicy
    budgets: tuple[float, ...]
    p: int
    bounds: BoundTables
    specs: tuple[SaturationSpec, ...]

    @property
    def n(self) -> int:
        return len(self.sats)

    @property
    def alpha_mu_n(self) -> float:
        return self.coordinates.alpha_mu_n

    @property
    def H(self) -> FloatArray:  # noqa: N802
        return self.coordinates.H

    @property
    def z_scale(self) -> FloatArray:
        """``L_{mu_i}/L_{sigma_i}``: maps the sigma_i argument to the mu_i argument."""
        return np.array([mu.L / sigma.L for mu, sigma in zip(self.mu_chain, self.sats, strict=True)])

    @property
    def amplitude(self) -> float:
        return float(self.a[-1] * self.sats[-1].sigma_max)


class FeedbackValue(NamedTuple):
    """Control value with the nested arguments ``s_i`` of sigma_i and ``z_i`` of mu_i."""

    u: float | FloatArray
    z: FloatArray
    s: FloatArray


def _as_batch(law: NestedFeedbackLaw, x: Sequence[float] | FloatArray) -> tuple[FloatArray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] != law.n:
        raise ValueError(f"state must have {law.n} components, got shape {arr.shape}")
    return np.atleast_2d(arr), arr.ndim == 1


def eval_feedback(law: NestedFeedbackLaw, x: Sequence[float] | FloatArray) -> FeedbackValue:
    """Evaluate the law at one state or a batch of states (rows)."""
    batch, single = _as_batch(law, x)
    linear = batch @ law.k.T
    s = np.empty_like(linear)
    s[:, 0] = linear[:, 0]
    for i in range(1, law.n):
        s[:, i] = linear[:, i] + law.a[i - 1] * law.sats[i - 1](s[:, i - 1])
    u = -law.a[-1] * law.sats[-1](s[:, -1])
    z = s * law.z_scale
    if single:
        return FeedbackValue(float(u[0]), z[0], s[0])
    return FeedbackValue(u, z, s)


def eval_upsilon(law: NestedFeedbackLaw, y: Sequence[float] | FloatArray) -> float | FloatArray:
    """``-mu_n(y_n + mu_{n-1}(y_{n-1} + ... mu_1(y_1)))``."""
    batch, single = _as_batch(law, y)
    w = batch[:, 0]
    for i in range(1, law.n):
        w = batch[:, i] + law.mu_chain[i - 1](w)
    u = -law.mu_chain[-1](w)
    return float(u[0]) if single else u


def linear_closed_loop_matrix(law: NestedFeedbackLaw) -> FloatArray:
    """Closed-loop matrix once every nested argument is inside its linear zone."""
    n = law.n
    feedback = -law.alpha_mu_n * np.ones(n) @ law.H
    A = chain_matrix(n)
    A[-1, :] += feedback
    return A


def validate_stability_conditions(mu_chain: Sequence[SaturationFunction]) -> StabilityReport:
    """Unit slope of mu_1..mu_{n-1} and ``mu_i^max < L_{mu_{i+1}}/2``."""
    conditions: list[StabilityCondition] = []
    for i, (mu, upper) in enumerate(zip(mu_chain, mu_chain[1:], strict=False), start=1):
        slope_error = abs(mu.alpha - 1.0)
        conditions.append(
            StabilityCondition(
                index=i, kind="unit-slope", passed=slope_error <= 1e-12, margin=-slope_error
            )
        )
        margin = upper.L / 2.0 - mu.sigma_max
        conditions.append(
            StabilityCondition(index=i, kind="nesting", passed=margin > 0.0, margin=margin)
        )
    return StabilityReport(conditions=conditions)


def _gains(
    sats: Sequence[SaturationFunction],
    mu_chain: Sequence[SaturationFunction],
    coordinates: CoordinateChange,
) -> tuple[FloatArray, FloatArray]:
    n = len(sats)
    a = np.empty(n)
    for i in range(n - 1):
        a[i] = sats[i + 1].L * mu_chain[i].sigma_max / (mu_chain[i + 1].L * sats[i].sigma_max)
    a[n - 1] = mu_chain[-1].sigma_max / sats[-1].sigma_max
    k = np.array(
        [sats[i].L / mu_chain[i].L * coordinates.H[i] for i in range(n)], dtype=float
    ).reshape(n, n)
    return a, k


def _check_budgets(bounds: BoundTables, targets: Sequence[float]) -> None:
    for j, (bound, target) in enumerate(zip(bounds.u_bound, targets, strict=True), start=1):
        if bound > target * (1.0 + BUDGET_SLACK):
            raise SynthesisError(
                f"derivative order {j}: bound {bound:.6g} exceeds budget {target:.6g}"
            )


@monitor_performance
def assemble_feedback(config: SynthesisConfig) -> NestedFeedbackLaw:
    """Run the full synthesis and return a validated law."""
    if config.n < 1:
        raise SynthesisError("chain length must be >= 1")
    sats = _build_saturations(config)
    inner = choose_inner_constants(config)
    lam = config.lambda_value if config.lambda_value is not None else select_lambda(config, inner)
    mu_chain = (*_inner_chain(sats, inner), rescale(sats[-1], config.budgets[0], lam))

    stability = validate_stability_conditions(mu_chain)
    if not stability.passed:
        failed = [
            f"{c.kind} at i={c.index} (margin {c.margin:.3g})"
            for c in stability.conditions
            if not c.passed
        ]
        raise SynthesisError("stability conditions violated: " + ", ".join(failed))

    bounds = compute_bound_tables(analyze_chain(mu_chain, config.p), config.n, config.p)
    _check_budgets(bounds, lambda_targets(config))

    coordinates = coordinate_change(config.n, mu_chain[-1].alpha)
    a, k = _gains(sats, mu_chain, coordinates)
    law = NestedFeedbackLaw(
        a=a,
        k=k,
        sats=tuple(sats),
        mu_chain=tuple(mu_chain),
        coordinates=coordinates,
        lambda_value=float(lam),
        lambda_policy=config.lambda_policy,
        budgets=tuple(config.budgets),
        p=config.p,
        bounds=bounds,
        specs=tuple(config.saturations),
    )
    logger.info(
        "law assembled",
        n=law.n,
        p=law.p,
        lambda_value=law.lambda_value,
        a=a.tolist(),
        u_bound=bounds.u_bound.tolist(),
    )
    return law


# --- persistence -------------------------------------------------------------------


def law_to_document(law: NestedFeedbackLaw) -> LawDocument:
    return LawDocument(
        n=law.n,
        p=law.p,
        lambda_value=law.lambda_value,
        lambda_policy=law.lambda_policy,
        budgets=list(law.budgets),
        a=law.a.tolist(),
        k=law.k.tolist(),
        H=law.H.tolist(),
        alpha_mu_n=law.alpha_mu_n,
        saturations=list(law.specs),
        chain=[ChainConstants(mu_max=mu.sigma_max, L=mu.L) for mu in law.mu_chain],
        bounds=law.bounds.to_document(),
    )


def _tables_from_document(doc: BoundTablesDocument) -> BoundTables:
    return BoundTables(
        Y=np.asarray(doc.Y, dtype=float).reshape(doc.n, doc.p),
        Z=np.asarray(doc.Z, dtype=float).reshape(doc.n, doc.p),
        G=np.asarray(doc.G, dtype=float).reshape(doc.p, doc.p),
        u_bound=np.asarray(doc.u_bound, dtype=float).reshape(doc.p),
    )


def law_from_document(doc: LawDocument) -> NestedFeedbackLaw:
    """Rebuild a law saved by :func:`law_to_document`."""
    if len(doc.saturations) != doc.n or len(doc.chain) != doc.n:
        raise ValueError(f"law document for n={doc.n} lists the wrong number of saturations")
    sats = tuple(from_spec(spec) for spec in doc.saturations)
    mu_chain = tuple(
        rescale(sigma, c.mu_max, c.L) for sigma, c in zip(sats, doc.chain, strict=True)
    )
    a = np.asarray(doc.a, dtype=float)
    k = np.asarray(doc.k, dtype=float)
    H = np.asarray(doc.H, dtype=float)
    if a.shape != (doc.n,) or k.shape != (doc.n, doc.n) or H.shape != (doc.n, doc.n):
        raise ValueError("law document gain shapes do not match n")
    return NestedFeedbackLaw(
        a=a,
        k=k,
        sats=sats,
        mu_chain=mu_chain,
        coordinates=CoordinateChange(H=H, alpha_mu_n=doc.alpha_mu_n),
        lambda_value=doc.lambda_value,
        lambda_policy=doc.lambda_policy,
        budgets=tuple(doc.budgets),
        p=doc.p,
        bounds=_tables_from_document(doc.bounds),
        specs=tuple(doc.saturations),
    )


__all__ = [
    "LAMBDA_TOL",
    "CoordinateChange",
    "FeedbackValue",
    "NestedFeedbackLaw",
    "SynthesisError",
    "assemble_feedback",
    "chain_matrix",
    "choose_inner_constants",
    "coordinate_change",
    "eval_feedback",
    "eval_upsilon",
    "lambda_bounds",
    "lambda_targets",
    "law_from_document",
    "law_to_document",
    "linear_closed_loop_matrix",
    "nesting_matrix",
    "outer_slope",
    "select_lambda",
    "validate_stability_conditions",
]
