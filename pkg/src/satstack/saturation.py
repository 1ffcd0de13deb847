"""Odd piecewise-polynomial saturations of class C^p.

A saturation is stored as its polynomial pieces on ``[0, S]`` together with its
constants. Negative arguments use the odd extension and ``|r| >= S`` the flat
tail, so oddness and the saturated zone hold by construction.

Each piece keeps its polynomial in the local variable ``u = r - start``; the
JSON form uses the power basis of ``r``.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple, overload

import numpy as np
import numpy.typing as npt
import structlog
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly

from satstack.models import (
    CheckResult,
    PieceSpec,
    SaturationConstants,
    SaturationSpec,
    ValidationReport,
)

logger = structlog.get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
RawPiece = tuple[float, float, Sequence[float]]

DENSE_SAMPLES = 100_000
IMAG_TOL = 1e-7
DEFAULT_TOL = 1e-9


class InvalidSaturationError(ValueError):
    """A saturation violates the class S(p) requirements."""


@dataclass(frozen=True, eq=False)
class Piece:
    """Polynomial ``poly(u)`` with ``u = r - start`` on ``[start, end]``."""

    start: float
    end: float
    poly: Polynomial
    derivs: tuple[tuple[float, ...], ...] = field(default=(), repr=False)

    @classmethod
    def build(cls, start: float, end: float, coeffs: Sequence[float], orders: int) -> Piece:
        poly = Polynomial(np.asarray(coeffs, dtype=float))
        derivs = tuple(tuple(float(c) for c in poly.deriv(m).coef) for m in range(orders + 1))
        return cls(float(start), float(end), poly, derivs)

    @classmethod
    def from_absolute(
        cls, start: float, end: float, coeffs: Sequence[float], orders: int
    ) -> Piece:
        local = _compose_affine(Polynomial(np.asarray(coeffs, dtype=float)), start, 1.0)
        return cls.build(start, end, local.coef, orders)

    @property
    def width(self) -> float:
        return self.end - self.start

    def absolute(self) -> Polynomial:
        """The piece polynomial in the power basis of ``r``."""
        return _compose_affine(self.poly, -self.start, 1.0)


def _horner(coeffs: tuple[float, ...], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _compose_affine(q: Polynomial, offset: float, slope: float) -> Polynomial:
    """``q(offset + slope*x)`` expanded in the power basis of ``x``."""
    inner = Polynomial([offset, slope])
    acc = Polynomial([q.coef[-1]])
    for c in q.coef[-2::-1]:
        acc = acc * inner + c
    return acc


class SaturationFunction:
    """Odd C^p saturation with constants ``(sigma_max, L, S, alpha)``.

    Instances are immutable. ``f(r, j)`` evaluates the j-th derivative for a
    float or an array of arguments.
    """

    __slots__ = ("constants", "pieces", "_starts", "_starts_array")

    constants: SaturationConstants
    pieces: tuple[Piece, ...]

    def __init__(self, constants: SaturationConstants, pieces: Iterable[Piece]) -> None:
        pieces = tuple(pieces)
        if not pieces:
            raise InvalidSaturationError("a saturation needs at least one piece on [0, S]")
        scale = max(1.0, constants.S)
        if abs(pieces[0].start) > 1e-12 * scale:
            raise InvalidSaturationError(f"coverage: first piece starts at {pieces[0].start}, not 0")
        for left, right in zip(pieces, pieces[1:], strict=False):
            if abs(left.end - right.start) > 1e-12 * scale:
                raise InvalidSaturationError(
                    f"coverage: gap or overlap between {left.end} and {right.start}"
                )
        if abs(pieces[-1].end - constants.S) > 1e-12 * scale:
            raise InvalidSaturationError(
                f"coverage: last piece ends at {pieces[-1].end}, expected S = {constants.S}"
            )
        starts = tuple(piece.start for piece in pieces)
        object.__setattr__(self, "constants", constants)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_starts_array", np.asarray(starts))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("SaturationFunction is immutable")

    def __repr__(self) -> str:
        c = self.constants
        return (
            f"SaturationFunction(sigma_max={c.sigma_max}, L={c.L}, S={c.S}, "
            f"alpha={c.alpha}, p={c.p}, pieces={len(self.pieces)})"
        )

    @property
    def sigma_max(self) -> float:
        return self.constants.sigma_max

    @property
    def L(self) -> float:  # noqa: N802
        return self.constants.L

    @property
    def S(self) -> float:  # noqa: N802
        return self.constants.S

    @property
    def alpha(self) -> float:
        return self.constants.alpha

    @property
    def p(self) -> int:
        return self.constants.p

    @property
    def knots(self) -> tuple[float, ...]:
        return (*self._starts, self.constants.S)

    @overload
    def __call__(self, r: float, j: int = 0) -> float: ...

    @overload
    def __call__(self, r: FloatArray, j: int = 0) -> FloatArray: ...

    def __call__(self, r: float | FloatArray, j: int = 0) -> float | FloatArray:
        if j < 0 or j > self.constants.p:
            raise InvalidSaturationError(
                f"derivative order {j} outside [0, {self.constants.p}] "
                f"for a C^{self.constants.p} saturation"
            )
        if isinstance(r, np.ndarray):
            return self._eval_array(r, j)
        return self._eval_scalar(float(r), j)

    def value(self, r: float) -> float:
        """``sigma(r)`` for a Python float, skipping the order check and dispatch."""
        return self._eval_scalar(r, 0)

    def _eval_scalar(self, r: float, j: int) -> float:
        a = abs(r)
        if a >= self.constants.S:
            g = self.constants.sigma_max if j == 0 else 0.0
        else:
            piece = self.pieces[bisect_right(self._starts, a) - 1]
            g = _horner(piece.derivs[j], a - piece.start) if j < len(piece.derivs) else 0.0
        if r < 0 and j % 2 == 0:
            return -g
        return g

    def _eval_array(self, r: FloatArray, j: int) -> FloatArray:
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        out = np.zeros_like(a)
        tail = a >= self.constants.S
        if j == 0:
            out[tail] = self.constants.sigma_max
        idx = np.searchsorted(self._starts_array, a, side="right") - 1
        for k, piece in enumerate(self.pieces):
            if j >= len(piece.derivs):
                continue
            mask = (idx == k) & ~tail
            if np.any(mask):
                out[mask] = npoly.polyval(a[mask] - piece.start, piece.derivs[j])
        if j % 2 == 0:
            out = np.where(r < 0, -out, out)
        return out


def evaluate(f: SaturationFunction, r: float, j: int = 0) -> float:
    """Exact value of the j-th derivative of ``f`` at ``r`` (j = 0: the value)."""
    return f(float(r), j)


# --- polynomial extremum helpers -------------------------------------------------


def _real_roots(poly: Polynomial, lo: float, hi: float) -> FloatArray:
    """Real roots of ``poly`` in ``[lo, hi]``; a dense grid if they are not finite."""
    coef = np.trim_zeros(poly.coef, "b")
    if coef.size <= 1:
        return np.empty(0)
    roots = npoly.polyroots(coef)
    if not np.all(np.isfinite(roots)):
        logger.warning("root finding ill-conditioned, sampling densely", lo=lo, hi=hi)
        return np.linspace(lo, hi, DENSE_SAMPLES)
    real = roots[np.abs(roots.imag) <= IMAG_TOL * np.maximum(1.0, np.abs(roots.real))].real
    return real[(real >= lo) & (real <= hi)]


def _critical_points(poly: Polynomial, lo: float, hi: float) -> FloatArray:
    """Both ends plus the stationary points of ``poly`` inside ``[lo, hi]``."""
    return np.concatenate([[lo, hi], _real_roots(poly.deriv(), lo, hi)])


def _abs_max(poly: Polynomial, lo: float, hi: float) -> tuple[float, float]:
    """Return ``(max |poly|, argmax)`` over ``[lo, hi]``."""
    points = _critical_points(poly, lo, hi)
    values = np.abs(poly(points))
    k = int(np.argmax(values))
    return float(values[k]), float(points[k])


def _minimum(poly: Polynomial, lo: float, hi: float) -> tuple[float, float]:
    """Return ``(min poly, argmin)`` over ``[lo, hi]``."""
    points = _critical_points(poly, lo, hi)
    values = poly(points)
    k = int(np.argmin(values))
    return float(values[k]), float(points[k])


# --- construction ------------------------------------------------------------------


def _hermite_blend(p: int, c: SaturationConstants) -> tuple[Polynomial, Polynomial]:
    """Degree 2p+1 blend in ``t = (r - L)/(S - L)`` and its rate factor.

    The blend is ``sigma_max - (1 - t)^(p+1) Q(t)`` where Q is the degree p Taylor
    part of ``(sigma_max - alpha*L - alpha*(S - L)*t) / (1 - t)^(p+1)``, so it meets
    the linear zone at t = 0 and the flat tail at t = 1 up to order p. Its
    derivative is ``(1 - t)^p * M(t)`` with ``M`` the returned rate factor.
    """
    rise = c.sigma_max - c.alpha * c.L
    slope = c.alpha * (c.S - c.L)
    q = Polynomial(
        [rise]
        + [rise * math.comb(p + k, k) - slope * math.comb(p + k - 1, k - 1) for k in range(1, p + 1)]
    )
    one_minus_t = Polynomial([1.0, -1.0])
    blend = c.sigma_max - one_minus_t ** (p + 1) * q
    rate = (p + 1) * q - one_minus_t * q.deriv()
    return blend, rate


def make_smooth_saturation(p: int, constants: SaturationConstants) -> SaturationFunction:
    """Linear zone, single Hermite blend on ``[L, S]`` and flat tail, of class C^p."""
    if p < 0:
        raise InvalidSaturationError(f"smoothness order must be >= 0, got {p}")
    if constants.S == constants.L and p >= 1:
        raise InvalidSaturationError(
            f"smoothness: S = L admits no C^{p} blend between the linear and the saturated zone"
        )
    if constants.alpha * constants.L > constants.sigma_max * (1.0 + 1e-12):
        raise InvalidSaturationError("alpha*L exceeds sigma_max")
    if constants.p != p:
        constants = SaturationConstants(**{**constants.model_dump(), "p": p})

    orders = max(p, 1) + 1
    pieces = [Piece.build(0.0, constants.L, [0.0, constants.alpha], orders)]
    if constants.S > constants.L:
        q, rate = _hermite_blend(p, constants)
        if not _minimum(rate, 0.0, 1.0)[0] > 0.0:
            raise InvalidSaturationError(
                f"the degree {2 * p + 1} blend on [L, S] = [{constants.L}, {constants.S}] "
                "is not increasing; enlarge S - L or reduce alpha*L"
            )
        local = _compose_affine(q, 0.0, 1.0 / (constants.S - constants.L))
        pieces.append(Piece.build(constants.L, constants.S, local.coef, orders))
    logger.debug("built smooth saturation", **constants.model_dump())
    return SaturationFunction(constants, pieces)


def _coerce_piece(item: PieceSpec | RawPiece, orders: int) -> Piece:
    if isinstance(item, PieceSpec):
        return Piece.from_absolute(item.start, item.end, item.coeffs, orders)
    start, end, coeffs = item
    return Piece.from_absolute(float(start), float(end), coeffs, orders)


def load_explicit_saturation(
    pieces: Sequence[PieceSpec | RawPiece],
    constants: SaturationConstants,
    *,
    check: bool = True,
    tol: float = DEFAULT_TOL,
) -> SaturationFunction:
    """Build a saturation from explicit pieces (power basis of ``r``) on ``[0, S]``.

    Pieces starting at ``L`` get the linear zone prepended. With ``check`` the
    result must pass :func:`validate_sp` at order ``constants.p``.
    """
    orders = max(constants.p, 1) + 1
    built = sorted((_coerce_piece(item, orders) for item in pieces), key=lambda pc: pc.start)
    if built and built[0].start > 0 and math.isclose(built[0].start, constants.L):
        built.insert(0, Piece.build(0.0, constants.L, [0.0, constants.alpha], orders))
    f = SaturationFunction(constants, built)
    if check:
        report = validate_sp(f, tol)
        if not report.passed:
            reasons = "; ".join(
                f"{c.name} failed at r={c.location}: {c.detail}" for c in report.failures()
            )
            raise InvalidSaturationError(f"not of class S({constants.p}): {reasons}")
    return f


# --- validation ----------------------------------------------------------------------


def _one_sided(piece: Piece, u: float, j: int) -> tuple[float, float]:
    """j-th derivative at local ``u`` and the sum of its absolute terms."""
    poly = piece.poly.deriv(j) if j else piece.poly
    return float(poly(u)), float(npoly.polyval(abs(u), np.abs(poly.coef)))


def validate_sp(
    f: SaturationFunction, tol: float = DEFAULT_TOL, order: int | None = None
) -> ValidationReport:
    """Check sign, linear zone, saturated zone, oddness and C^order continuity.

    ``order`` defaults to the order the function claims.
    """
    c = f.constants
    order = c.p if order is None else order
    checks: list[CheckResult] = []

    worst_sign, worst_sign_at = math.inf, 0.0
    for piece in f.pieces:
        points = _critical_points(piece.poly, 0.0, piece.width)
        if piece.start == 0.0:
            if abs(piece.poly(0.0)) > tol or piece.poly.deriv()(0.0) <= 0.0:
                worst_sign, worst_sign_at = 0.0, 0.0
            points = points[points > 0.0]
        if points.size:
            values = piece.poly(points)
            k = int(np.argmin(values))
            if values[k] < worst_sign:
                worst_sign, worst_sign_at = float(values[k]), piece.start + float(points[k])
    checks.append(
        CheckResult(
            name="sign",
            passed=worst_sign > 0.0,
            detail="r*f(r) > 0 for r != 0",
            location=worst_sign_at,
            value=worst_sign,
        )
    )

    gap, gap_at = 0.0, 0.0
    for piece in f.pieces:
        if piece.start >= c.L:
            continue
        linear = Polynomial([c.alpha * piece.start, c.alpha])
        value, where = _abs_max(piece.poly - linear, 0.0, min(piece.end, c.L) - piece.start)
        if value > gap:
            gap, gap_at = value, piece.start + where
    checks.append(
        CheckResult(
            name="linear-zone",
            passed=gap <= tol * max(1.0, c.alpha * c.L),
            detail=f"f(r) = {c.alpha}*r on [0, {c.L}]",
            location=gap_at,
            value=gap,
        )
    )

    at_s, _ = _one_sided(f.pieces[-1], f.pieces[-1].width, 0)
    checks.append(
        CheckResult(
            name="saturation-zone",
            passed=abs(at_s - c.sigma_max) <= tol * max(1.0, c.sigma_max),
            detail=f"f(r) = {c.sigma_max} for r >= {c.S}",
            location=c.S,
            value=at_s,
        )
    )

    samples = np.concatenate(
        [np.asarray(f.knots), [(pc.start + pc.end) / 2 for pc in f.pieces], [2.0 * c.S]]
    )
    odd_gap = float(np.max(np.abs(f._eval_array(-samples, 0) + f._eval_array(samples, 0))))
    checks.append(
        CheckResult(
            name="odd-symmetry", passed=odd_gap <= tol, detail="f(-r) = -f(r)", value=odd_gap
        )
    )

    for j in range(order + 1):
        worst, worst_at = 0.0, 0.0
        failing: list[float] = []
        if j % 2 == 0:
            # odd extension: the one-sided j-th derivatives at 0 are -g and g
            at_zero, _ = _one_sided(f.pieces[0], 0.0, j)
            mismatch = 2.0 * abs(at_zero) / max(1.0, abs(at_zero))
            worst = mismatch
            if mismatch > tol:
                failing.append(0.0)
        for k, piece in enumerate(f.pieces):
            left, left_scale = _one_sided(piece, piece.width, j)
            if k + 1 < len(f.pieces):
                right, right_scale = _one_sided(f.pieces[k + 1], 0.0, j)
            else:
                right, right_scale = (c.sigma_max if j == 0 else 0.0), 0.0
            mismatch = abs(left - right) / max(
                1.0, abs(left), abs(right), left_scale, right_scale
            )
            if mismatch > worst:
                worst, worst_at = mismatch, piece.end
            if mismatch > tol:
                failing.append(piece.end)
        checks.append(
            CheckResult(
                name=f"continuity-C{j}",
                passed=not failing,
                detail=(
                    f"one-sided derivatives of order {j} differ at r in {failing}"
                    if failing
                    else f"derivatives of order {j} match at every knot"
                ),
                location=worst_at,
                value=worst,
            )
        )
    return ValidationReport(order=order, checks=checks)


# --- analysis ----------------------------------------------------------------------


def derivative_sup(f: SaturationFunction, j: int) -> float:
    """Global supremum of ``|f^(j)|`` over the real line, for 1 <= j <= p."""
    if not 1 <= j <= f.p:
        raise InvalidSaturationError(f"derivative order {j} outside [1, {f.p}]")
    best = 0.0
    for piece in f.pieces:
        value, _ = _abs_max(piece.poly.deriv(j), 0.0, piece.width)
        best = max(best, value)
    return best


def linear_gap_bound(f: SaturationFunction, prev_max: float) -> float:
    """Max of ``|r - f(r)|`` over ``|r| <= S + 2*prev_max``."""
    if prev_max < 0:
        raise InvalidSaturationError(f"prev_max must be >= 0, got {prev_max}")
    if not math.isclose(f.alpha, 1.0, rel_tol=1e-12):
        logger.debug("linear gap of a saturation with alpha != 1", alpha=f.alpha)
    radius = f.S + 2.0 * prev_max
    best = 0.0
    for piece in f.pieces:
        hi = min(piece.end, radius)
        if hi <= piece.start:
            continue
        identity = Polynomial([piece.start, 1.0])
        value, _ = _abs_max(identity - piece.poly, 0.0, hi - piece.start)
        best = max(best, value)
    if radius > f.S:
        best = max(best, abs(radius - f.sigma_max), abs(f.S - f.sigma_max))
    return best


class SecantBounds(NamedTuple):
    secant_sup: float
    secant_inf: float
    secant_inf_clamped: float


def secant_bounds(f: SaturationFunction, prev_max: float) -> SecantBounds:
    """Extremes of ``f(r)/r`` on ``0 < |r| <= S`` and the clamped lower value.

    The r -> 0 limit is taken analytically, so the linear zone contributes alpha.
    """
    if prev_max < 0:
        raise InvalidSaturationError(f"prev_max must be >= 0, got {prev_max}")
    lo_val, hi_val = math.inf, -math.inf
    for piece in f.pieces:
        if piece.start == 0.0:
            coef = piece.poly.coef
            ratio = Polynomial(coef[1:] if coef.size > 1 else [0.0])
            points = _critical_points(ratio, 0.0, piece.width)
            values = ratio(points)
        else:
            shifted = Polynomial([piece.start, 1.0])
            # P/(u + start) is stationary where (u + start)*P' - P vanishes
            stationary = shifted * piece.poly.deriv() - piece.poly
            points = np.concatenate(
                [[0.0, piece.width], _real_roots(stationary, 0.0, piece.width)]
            )
            values = piece.poly(points) / (points + piece.start)
        lo_val = min(lo_val, float(np.min(values)))
        hi_val = max(hi_val, float(np.max(values)))
    clamped = min(lo_val, f.sigma_max / (f.S + 2.0 * prev_max))
    return SecantBounds(secant_sup=hi_val, secant_inf=lo_val, secant_inf_clamped=clamped)


@dataclass(frozen=True)
class SaturationAnalysis:
    """Derived scalars of one saturation in its chain context.

    ``deriv_sup[j - 1]`` holds the supremum of the j-th derivative.
    """

    deriv_sup: tuple[float, ...]
    linear_gap: float
    secant_sup: float
    secant_inf: float
    secant_inf_clamped: float
    context_prev_max: float
    sigma_max: float
    alpha: float
    S: float

    def sup(self, j: int) -> float:
        return self.deriv_sup[j - 1]


def analyze_saturation(
    f: SaturationFunction, prev_max: float, order: int | None = None
) -> SaturationAnalysis:
    """Bundle the derivative suprema, linear gap and secant data of ``f``."""
    order = f.p if order is None else order
    secants = secant_bounds(f, prev_max)
    return SaturationAnalysis(
        deriv_sup=tuple(derivative_sup(f, j) for j in range(1, order + 1)),
        linear_gap=linear_gap_bound(f, prev_max),
        secant_sup=secants.secant_sup,
        secant_inf=secants.secant_inf,
        secant_inf_clamped=secants.secant_inf_clamped,
        context_prev_max=prev_max,
        sigma_max=f.sigma_max,
        alpha=f.alpha,
        S=f.S,
    )


def rescale(base: SaturationFunction, new_max: float, new_L: float) -> SaturationFunction:  # noqa: N803
    """``s -> (new_max/sigma_max) * base(s * L/new_L)`` with exact piece rescaling."""
    if not (new_max > 0 and new_L > 0):
        raise InvalidSaturationError("rescale needs positive new_max and new_L")
    c = base.constants

    def arg(x: float) -> float:
        return x * new_L / c.L

    value_scale = new_max / c.sigma_max
    arg_scale = c.L / new_L
    constants = SaturationConstants(
        sigma_max=new_max,
        L=new_L,
        S=arg(c.S),
        alpha=c.alpha * new_max * c.L / (c.sigma_max * new_L),
        p=c.p,
    )
    orders = max(c.p, 1) + 1
    pieces = [
        Piece.build(
            arg(piece.start),
            arg(piece.end),
            [coef * value_scale * arg_scale**k for k, coef in enumerate(piece.poly.coef)],
            orders,
        )
        for piece in base.pieces
    ]
    return SaturationFunction(constants, pieces)


def to_spec(f: SaturationFunction) -> SaturationSpec:
    """Serializable form carrying the explicit pieces."""
    c = f.constants
    return SaturationSpec(
        p=c.p,
        sigma_max=c.sigma_max,
        L=c.L,
        S=c.S,
        alpha=c.alpha,
        pieces=[
            PieceSpec(
                start=piece.start,
                end=piece.end,
                coeffs=[float(v) for v in piece.absolute().coef],
            )
            for piece in f.pieces
        ],
    )


def from_spec(spec: SaturationSpec, *, check: bool = True) -> SaturationFunction:
    """Hermite construction without pieces, explicit load otherwise."""
    constants = spec.constants()
    if spec.pieces is None:
        return make_smooth_saturation(spec.p, constants)
    return load_explicit_saturation(spec.pieces, constants, check=check)


__all__ = [
    "DEFAULT_TOL",
    "DENSE_SAMPLES",
    "InvalidSaturationError",
    "Piece",
    "SaturationAnalysis",
    "SaturationFunction",
    "SecantBounds",
    "analyze_saturation",
    "derivative_sup",
    "evaluate",
    "from_spec",
    "linear_gap_bound",
    "load_explicit_saturation",
    "make_smooth_saturation",
    "rescale",
    "secant_bounds",
    "to_spec",
    "validate_sp",
]
