"""A-priori bounds on the derivatives of the nested feedback along trajectories.

The recursion runs on the internal chain mu_1..mu_n. It is written once over
ring elements so the same code fills numeric tables and, with the outer
saturation parameterized by lambda, polynomials in ``x = 1/lambda``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
import structlog
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly

from satstack.bell import bell_eval_upper
from satstack.models import BoundTablesDocument
from satstack.saturation import SaturationAnalysis, SaturationFunction, analyze_saturation

logger = structlog.get_logger(__name__)

FloatArray = npt.NDArray[np.float64]


def composed_derivative_bound(
    k: int, M: Any, Q: Sequence[Any], sigma_sups: Sequence[Any]  # noqa: N803
) -> Any:
    """``M + sum_a sigma_sups[a-1] * B_{k,a}(Q_1, ..., Q_{k-a+1})``.

    Bounds the k-th derivative of ``g + sigma(f)`` given ``|g^(k)| <= M``,
    ``|f^(l)| <= Q_l`` and ``|sigma^(a)| <= sigma_sups[a-1]``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(Q) < k or len(sigma_sups) < k:
        raise ValueError(
            f"order {k} needs {k} derivative bounds and {k} saturation suprema, "
            f"got {len(Q)} and {len(sigma_sups)}"
        )
    if isinstance(M, (int, float)) and M < 0:
        raise ValueError(f"M must be nonnegative, got {M}")
    if any(isinstance(s, (int, float)) and s < 0 for s in sigma_sups[:k]):
        raise ValueError(f"saturation suprema must be nonnegative: {list(sigma_sups)}")
    total: Any = M
    for a in range(1, k + 1):
        total = total + sigma_sups[a - 1] * bell_eval_upper(k, a, Q[: k - a + 1])
    return total


@dataclass(frozen=True)
class _Tables:
    Y: list[list[Any]]
    Z: list[list[Any]]
    G: list[list[Any]]
    u: list[Any]


def _recursion(
    n: int,
    p: int,
    mu_max: Sequence[Any],
    sup: Callable[[int, int], Any],
    gaps: Sequence[Any],
    alpha_n: Any,
    outer_gap: Any,
) -> _Tables:
    """Fill Y, Z, G and the control-derivative bounds.

    ``sup(i, q)`` is the supremum of the q-th derivative of mu_i, ``gaps[l-1]`` the
    linear gap of mu_l (l < n) and ``outer_gap`` the term
    ``(b_sup - B_inf)(S + 2 mu_{n-1}^max)`` of the outer saturation.
    """
    Y: list[list[Any]] = [[0.0] * p for _ in range(n)]
    Z: list[list[Any]] = [[0.0] * p for _ in range(n)]
    G: list[list[Any]] = [[0.0] * p for _ in range(p)]
    u: list[Any] = [0.0] * p
    for j in range(1, p + 1):
        for i in range(n, 0, -1):
            if j == 1 and i == n:
                Y[i - 1][0] = mu_max[n - 1]
            elif j == 1:
                inner_gaps = sum((gaps[l - 1] for l in range(i + 1, n)), 0.0)
                Y[i - 1][0] = outer_gap + alpha_n * inner_gaps + alpha_n * mu_max[i - 1]
            else:
                above = sum((Y[b - 1][j - 2] for b in range(i + 1, n + 1)), 0.0)
                Y[i - 1][j - 1] = alpha_n * above + u[j - 2]
        Z[0][j - 1] = Y[0][j - 1]
        for i in range(2, n + 1):
            Z[i - 1][j - 1] = composed_derivative_bound(
                j,
                Y[i - 1][j - 1],
                [Z[i - 2][l] for l in range(j)],
                [sup(i - 1, a) for a in range(1, j + 1)],
            )
        for q in range(1, j + 1):
            G[q - 1][j - 1] = bell_eval_upper(j, q, [Z[n - 1][l] for l in range(j - q + 1)])
        u[j - 1] = sum((G[q - 1][j - 1] * sup(n, q) for q in range(1, j + 1)), 0.0)
    return _Tables(Y, Z, G, u)


@dataclass(frozen=True)
class BoundTables:
    """``Y[i-1, j-1]``, ``Z[i-1, j-1]``, ``G[q-1, j-1]`` and ``u_bound[j-1]``."""

    Y: FloatArray
    Z: FloatArray
    G: FloatArray
    u_bound: FloatArray

    @property
    def n(self) -> int:
        return int(self.Y.shape[0])

    @property
    def p(self) -> int:
        return int(self.u_bound.shape[0])

    def to_document(self) -> BoundTablesDocument:
        return BoundTablesDocument(
            n=self.n,
            p=self.p,
            Y=self.Y.tolist(),
            Z=self.Z.tolist(),
            G=self.G.tolist(),
            u_bound=self.u_bound.tolist(),
        )


def _check_analyses(analyses: Sequence[SaturationAnalysis], n: int, p: int) -> None:
    if n < 1:
        raise ValueError(f"chain length must be >= 1, got {n}")
    if len(analyses) != n:
        raise ValueError(f"expected {n} saturation analyses, got {len(analyses)}")
    for i, analysis in enumerate(analyses, start=1):
        if len(analysis.deriv_sup) < p:
            raise ValueError(
                f"analysis of mu_{i} carries {len(analysis.deriv_sup)} derivative suprema, "
                f"order {p} required"
            )


def compute_bound_tables(
    analyses: Sequence[SaturationAnalysis], n: int, p: int
) -> BoundTables:
    """Bound tables of the chain whose i-th saturation is described by ``analyses[i-1]``."""
    _check_analyses(analyses, n, p)
    outer = analyses[n - 1]
    outer_gap = (outer.secant_sup - outer.secant_inf_clamped) * (
        outer.S + 2.0 * outer.context_prev_max
    )
    tables = _recursion(
        n,
        p,
        mu_max=[a.sigma_max for a in analyses],
        sup=lambda i, q: analyses[i - 1].sup(q),
        gaps=[a.linear_gap for a in analyses[: n - 1]],
        alpha_n=outer.alpha,
        outer_gap=outer_gap if n > 1 else 0.0,
    )
    result = BoundTables(
        Y=np.asarray(tables.Y, dtype=float).reshape(n, p),
        Z=np.asarray(tables.Z, dtype=float).reshape(n, p),
        G=np.asarray(tables.G, dtype=float).reshape(p, p),
        u_bound=np.asarray(tables.u, dtype=float).reshape(p),
    )
    if not (np.all(np.isfinite(result.Y)) and np.all(np.isfinite(result.u_bound))):
        raise ValueError("bound tables contain non-finite entries")
    return result


def analyze_chain(chain: Sequence[SaturationFunction], p: int) -> list[SaturationAnalysis]:
    """Analyses of mu_1..mu_n with mu_{i-1}^max as context (0 for i = 1)."""
    analyses: list[SaturationAnalysis] = []
    prev_max = 0.0
    for mu in chain:
        analyses.append(analyze_saturation(mu, prev_max, order=p))
        prev_max = mu.sigma_max
    return analyses


@dataclass(frozen=True)
class LambdaBranch:
    """``coefficients[k]`` multiplies ``(1/lambda)^k`` on ``[lambda_min, lambda_max]``."""

    lambda_min: float
    lambda_max: float
    coefficients: tuple[float, ...]

    def __call__(self, lam: float | FloatArray) -> float | FloatArray:
        return npoly.polyval(1.0 / np.asarray(lam, dtype=float), self.coefficients)  # type: ignore[no-any-return]


@dataclass(frozen=True)
class LambdaBoundPolynomial:
    """Bound on ``sup |u^(j)|`` as a function of lambda.

    Each branch is ``(1/lambda) P(1/lambda)`` with nonnegative coefficients; a
    second branch appears when the clamp on the outer secant switches.
    """

    order: int
    branches: tuple[LambdaBranch, ...]

    def branch_at(self, lam: float) -> LambdaBranch:
        for branch in self.branches:
            if branch.lambda_min <= lam <= branch.lambda_max:
                return branch
        raise ValueError(f"lambda = {lam} outside every branch")

    def evaluate(self, lam: float) -> float:
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        return float(self.branch_at(lam)(lam))

    __call__ = evaluate

    def describe(self) -> str:
        """Human-readable form ``c1/l + c2/l^2 + ...`` of each branch."""
        parts = []
        for branch in self.branches:
            terms = " + ".join(
                f"{c:.6g}/lambda^{k}" for k, c in enumerate(branch.coefficients) if k and c
            )
            parts.append(f"[{branch.lambda_min:g}, {branch.lambda_max:g}]: {terms or '0'}")
        return "; ".join(parts)


def _as_coefficients(value: Any) -> tuple[float, ...]:
    if isinstance(value, Polynomial):
        coef = value.coef
    else:
        coef = np.asarray([float(value)])
    coef = np.where(np.abs(coef) < 1e-300, 0.0, coef)
    return tuple(float(c) for c in coef)


def lambda_bound_polynomials(
    base_analyses: Sequence[SaturationAnalysis], n: int, p: int
) -> list[LambdaBoundPolynomial]:
    """Bounds for j = 1..p as functions of lambda.

    ``base_analyses[n-1]`` describes the outer saturation at lambda = 1, i.e. with
    constants ``(R_0, 1, S_sigma/L_sigma, alpha_tilde)``; at lambda its secant data
    scale with 1/lambda, its q-th derivative supremum with 1/lambda^q, its
    thresholds with lambda, and its slope with 1/lambda.
    """
    _check_analyses(base_analyses, n, p)
    if p == 0:
        return []
    x = Polynomial([0.0, 1.0])
    outer = base_analyses[n - 1]
    r0, s_tilde, m = outer.sigma_max, outer.S, outer.context_prev_max
    b_sup, b_inf = outer.secant_sup, outer.secant_inf

    def sup(i: int, q: int) -> Any:
        if i == n:
            return outer.sup(q) * x**q
        return base_analyses[i - 1].sup(q)

    # outer gap term on each side of the clamp switch
    clamp_gap = Polynomial([max(0.0, b_sup * s_tilde - r0), 2.0 * m * b_sup])
    plain_gap = Polynomial([max(0.0, (b_sup - b_inf) * s_tilde), 2.0 * m * (b_sup - b_inf)])
    slack = r0 - b_inf * s_tilde
    if n == 1:
        pieces = [(0.0, math.inf, Polynomial([0.0]))]
    elif slack <= 1e-12 * r0:
        pieces = [(0.0, math.inf, clamp_gap)]
    else:
        switch = 2.0 * m * b_inf / slack
        pieces = [(0.0, switch, clamp_gap), (switch, math.inf, plain_gap)]

    per_branch = []
    for lo, hi, outer_gap in pieces:
        tables = _recursion(
            n,
            p,
            mu_max=[a.sigma_max for a in base_analyses],
            sup=sup,
            gaps=[a.linear_gap for a in base_analyses[: n - 1]],
            alpha_n=outer.alpha * x,
            outer_gap=outer_gap,
        )
        per_branch.append((lo, hi, tables.u))

    result = []
    for j in range(1, p + 1):
        branches = tuple(
            LambdaBranch(lo, hi, _as_coefficients(u[j - 1])) for lo, hi, u in per_branch
        )
        result.append(LambdaBoundPolynomial(order=j, branches=branches))
    logger.debug(
        "lambda bound polynomials", n=n, p=p, bounds=[poly.describe() for poly in result]
    )
    return result


def lambda_bound_polynomial(
    base_analyses: Sequence[SaturationAnalysis], n: int, p: int, j: int
) -> LambdaBoundPolynomial:
    """Bound on ``sup |u^(j)|`` as a function of lambda, for 1 <= j <= p."""
    if not 1 <= j <= p:
        raise ValueError(f"order {j} outside [1, {p}]")
    return lambda_bound_polynomials(base_analyses, n, p)[j - 1]


__all__ = [
    "BoundTables",
    "LambdaBoundPolynomial",
    "LambdaBranch",
    "analyze_chain",
    "composed_derivative_bound",
    "compute_bound_tables",
    "lambda_bound_polynomial",
    "lambda_bound_polynomials",
]
