"""Tests for the derivative bound recursion and its lambda polynomials."""

from dataclasses import replace

import numpy as np
import pytest

from satstack.bounds import (
    BoundTables,
    analyze_chain,
    composed_derivative_bound,
    compute_bound_tables,
    lambda_bound_polynomial,
    lambda_bound_polynomials,
)
from satstack.models import SaturationSpec, SynthesisConfig
from satstack.saturation import (
    SaturationAnalysis,
    SaturationFunction,
    analyze_saturation,
    rescale,
)
from satstack.synthesis import NestedFeedbackLaw, lambda_bounds

LAMBDA = 6.5
X = 1.0 / LAMBDA
U1_AT_LAMBDA = 4.25 * X + 6.74375 * X**2
U2_AT_LAMBDA = 13.787


def hermite_config(n: int, budgets: list[float]) -> SynthesisConfig:
    spec = SaturationSpec(p=len(budgets) - 1, sigma_max=2, L=1, S=3, alpha=1)
    return SynthesisConfig(n=n, p=len(budgets) - 1, budgets=budgets, saturations=[spec] * n)


class TestComposedDerivativeBound:
    def test_first_order(self) -> None:
        assert composed_derivative_bound(1, 0.5, [2.0], [3.0]) == pytest.approx(6.5)

    def test_second_order(self) -> None:
        # M + s1*Q2 + s2*Q1^2
        assert composed_derivative_bound(2, 1.0, [2.0, 3.0], [0.5, 4.0]) == pytest.approx(18.5)

    def test_monotone_in_inputs(self) -> None:
        low = composed_derivative_bound(3, 0.0, [1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        high = composed_derivative_bound(3, 0.0, [1.0, 2.0, 1.0], [1.0, 1.0, 2.0])
        assert high > low

    def test_rejects_negative(self) -> None:
        with pytest.raises(ValueError, match="nonnegative"):
            composed_derivative_bound(1, -1.0, [1.0], [1.0])
        with pytest.raises(ValueError, match="nonnegative"):
            composed_derivative_bound(1, 0.0, [1.0], [-1.0])

    def test_rejects_short_inputs(self) -> None:
        with pytest.raises(ValueError, match="order 2"):
            composed_derivative_bound(2, 0.0, [1.0], [1.0, 1.0])


class TestWorkedTables:
    def test_first_order_bound(self, worked_law: NestedFeedbackLaw) -> None:
        assert worked_law.bounds.u_bound[0] == pytest.approx(U1_AT_LAMBDA, rel=1e-9)

    def test_second_order_bound(self, worked_law: NestedFeedbackLaw) -> None:
        assert worked_law.bounds.u_bound[1] == pytest.approx(U2_AT_LAMBDA, rel=1e-3)

    def test_first_column(self, worked_law: NestedFeedbackLaw) -> None:
        gap = 2.0 / 9.0 + 8.0 / 9.0 * X
        Y = worked_law.bounds.Y
        assert Y[2, 0] == pytest.approx(2.0)
        assert Y[1, 0] == pytest.approx(gap + 0.4 * X, rel=1e-9)
        assert Y[0, 0] == pytest.approx(gap + X / 6.0 + X / 12.0, rel=1e-9)

    def test_shapes_and_signs(self, worked_law: NestedFeedbackLaw) -> None:
        tables = worked_law.bounds
        assert tables.Y.shape == (3, 2)
        assert tables.Z.shape == (3, 2)
        assert tables.G.shape == (2, 2)
        assert tables.n == 3 and tables.p == 2
        assert np.all(tables.Y >= 0) and np.all(tables.Z >= 0) and np.all(tables.G >= 0)
        assert tables.G[1, 0] == 0.0

    def test_first_layer_copies_y(self, worked_law: NestedFeedbackLaw) -> None:
        assert np.array_equal(worked_law.bounds.Z[0], worked_law.bounds.Y[0])

    def test_document(self, worked_law: NestedFeedbackLaw) -> None:
        doc = worked_law.bounds.to_document()
        assert doc.n == 3 and doc.p == 2
        assert doc.u_bound == worked_law.bounds.u_bound.tolist()
        assert len(doc.G) == 2 and len(doc.G[0]) == 2

    def test_analysis_count_checked(self, worked_law: NestedFeedbackLaw) -> None:
        analyses = analyze_chain(worked_law.mu_chain, 2)
        with pytest.raises(ValueError, match="expected 3 saturation analyses"):
            compute_bound_tables(analyses[:2], 3, 2)

    def test_order_checked(self, worked_law: NestedFeedbackLaw) -> None:
        analyses = analyze_chain(worked_law.mu_chain, 1)
        with pytest.raises(ValueError, match="order 2 required"):
            compute_bound_tables(analyses, 3, 2)


class TestLambdaPolynomials:
    def test_match_numeric_tables(
        self, worked_config: SynthesisConfig, worked_law: NestedFeedbackLaw
    ) -> None:
        polys = lambda_bounds(worked_config)
        assert [poly.order for poly in polys] == [1, 2]
        for j, poly in enumerate(polys):
            assert poly(LAMBDA) == pytest.approx(worked_law.bounds.u_bound[j], rel=1e-9)

    def test_first_order_coefficients(self, worked_config: SynthesisConfig) -> None:
        (u1, _) = lambda_bounds(worked_config)
        assert len(u1.branches) == 1
        coefficients = u1.branches[0].coefficients
        assert coefficients[0] == 0.0
        assert coefficients[1] == pytest.approx(4.25, rel=1e-9)
        assert coefficients[2] == pytest.approx(6.74375, rel=1e-9)

    def test_nonnegative_and_decreasing(self, worked_config: SynthesisConfig) -> None:
        grid = [1.0, 2.0, 4.0, 6.5, 10.0, 100.0]
        for poly in lambda_bounds(worked_config):
            for branch in poly.branches:
                assert all(c >= 0.0 for c in branch.coefficients)
            values = [poly(lam) for lam in grid]
            assert all(b < a for a, b in zip(values, values[1:], strict=False))

    @pytest.mark.parametrize(
        ("lam", "u1_reference", "u2_reference"),
        [(2.0, 4.1525, 263.3), (6.5, 0.85645, 17.65), (10.0, 0.5141, 7.74)],
    )
    def test_against_reference_values(
        self, worked_config: SynthesisConfig, lam: float, u1_reference: float, u2_reference: float
    ) -> None:
        u1, u2 = lambda_bounds(worked_config)
        assert u1(lam) == pytest.approx(u1_reference, rel=0.1)
        assert u1(lam) <= u1_reference
        assert u2(lam) <= u2_reference

    def test_single_index(
        self, worked_law: NestedFeedbackLaw, worked_sigma: SaturationFunction
    ) -> None:
        analyses = [
            *analyze_chain(worked_law.mu_chain[:2], 2),
            analyze_saturation(rescale(worked_sigma, 2.0, 1.0), 0.4),
        ]
        second = lambda_bound_polynomial(analyses, 3, 2, 2)
        assert second.order == 2
        assert second(LAMBDA) == pytest.approx(lambda_bound_polynomials(analyses, 3, 2)[1](LAMBDA))
        with pytest.raises(ValueError, match="outside"):
            lambda_bound_polynomial(analyses, 3, 2, 3)

    def test_rejects_non_positive_lambda(self, worked_config: SynthesisConfig) -> None:
        (u1, _) = lambda_bounds(worked_config)
        with pytest.raises(ValueError, match="positive"):
            u1(0.0)

    def test_describe(self, worked_config: SynthesisConfig) -> None:
        (u1, _) = lambda_bounds(worked_config)
        text = u1.describe()
        assert "/lambda^1" in text and "/lambda^2" in text

    def test_single_integrator(self) -> None:
        # u' is bounded by R_0 * sup|sigma'| / (2 lambda) with sigma_max = 2
        config = hermite_config(1, [1.0, 0.1])
        (u1,) = lambda_bounds(config)
        assert u1(1.0) == pytest.approx(0.5)
        assert u1(5.0) == pytest.approx(0.1)

    def test_double_integrator(self) -> None:
        (u1,) = lambda_bounds(hermite_config(2, [1.0, 0.5]))
        assert len(u1.branches) == 1
        for lam in (1.0, 2.0, 5.0):
            x = 1.0 / lam
            assert u1(lam) == pytest.approx(0.75 * x + 0.3 * x**2, rel=1e-9)

    def test_no_derivatives(self) -> None:
        spec = SaturationSpec(p=0, sigma_max=1, L=1, S=1, alpha=1)
        config = SynthesisConfig(n=2, p=0, budgets=[1.0], saturations=[spec, spec])
        assert lambda_bounds(config) == []


def outer_at(base: SaturationAnalysis, lam: float) -> SaturationAnalysis:
    """The outer analysis with linearity threshold ``lam`` instead of 1."""
    return replace(
        base,
        deriv_sup=tuple(s / lam**q for q, s in enumerate(base.deriv_sup, start=1)),
        secant_sup=base.secant_sup / lam,
        secant_inf=base.secant_inf / lam,
        secant_inf_clamped=min(
            base.secant_inf / lam, base.sigma_max / (lam * base.S + 2.0 * base.context_prev_max)
        ),
        alpha=base.alpha / lam,
        S=lam * base.S,
    )


class TestTwoBranches:
    @pytest.fixture
    def analyses(self, worked_sigma: SaturationFunction) -> list[SaturationAnalysis]:
        inner = analyze_saturation(rescale(worked_sigma, 1.0, 0.5), 0.0, 1)
        # R_0 - b_inf*S = 0.5 > 0, so the clamp switches off at lambda = 2
        outer = SaturationAnalysis(
            deriv_sup=(1.0,),
            linear_gap=0.0,
            secant_sup=1.2,
            secant_inf=0.5,
            secant_inf_clamped=0.5,
            context_prev_max=1.0,
            sigma_max=1.5,
            alpha=0.75,
            S=2.0,
        )
        return [inner, outer]

    def test_switch_point(self, analyses: list[SaturationAnalysis]) -> None:
        (u1,) = lambda_bound_polynomials(analyses, 2, 1)
        assert len(u1.branches) == 2
        assert u1.branches[0].lambda_max == pytest.approx(2.0)
        assert u1.branches[1].lambda_min == u1.branches[0].lambda_max

    def test_continuous_at_switch(self, analyses: list[SaturationAnalysis]) -> None:
        (u1,) = lambda_bound_polynomials(analyses, 2, 1)
        first, second = u1.branches
        assert first(2.0) == pytest.approx(second(2.0), rel=1e-12)

    @pytest.mark.parametrize("lam", [1.0, 1.5, 2.0, 3.0, 8.0])
    def test_matches_numeric_tables(self, analyses: list[SaturationAnalysis], lam: float) -> None:
        (u1,) = lambda_bound_polynomials(analyses, 2, 1)
        tables = compute_bound_tables([analyses[0], outer_at(analyses[1], lam)], 2, 1)
        assert u1(lam) == pytest.approx(tables.u_bound[0], rel=1e-12)


def test_bound_tables_dataclass() -> None:
    tables = BoundTables(
        Y=np.zeros((2, 1)), Z=np.zeros((2, 1)), G=np.zeros((1, 1)), u_bound=np.zeros(1)
    )
    assert tables.n == 2
    assert tables.p == 1
