"""Tests for partial Bell polynomials and Faa di Bruno."""

import itertools
import math
from collections import Counter
from collections.abc import Callable

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from satstack.bell import (
    BellTable,
    PartitionTuple,
    bell_eval,
    bell_eval_upper,
    enumerate_partitions,
    faa_di_bruno,
    get_bell_table,
)
from satstack.saturation import SaturationFunction
from satstack.simulate import finite_difference_derivatives

STIRLING_5 = {1: 1, 2: 15, 3: 25, 4: 10, 5: 1}


def brute_force_deltas(k: int, a: int) -> set[tuple[int, ...]]:
    """Every multiplicity vector of length k-a+1 with the right sum and weighted sum."""
    return {
        delta
        for delta in itertools.product(range(a + 1), repeat=k - a + 1)
        if sum(delta) == a and sum(l * d for l, d in enumerate(delta, start=1)) == k
    }


def set_partition_block_counts(k: int) -> Counter[int]:
    """Block counts over all set partitions of k elements, as restricted growth strings."""
    counts: Counter[int] = Counter()

    def extend(length: int, blocks: int) -> None:
        if length == k:
            counts[blocks] += 1
            return
        for block in range(blocks + 1):
            extend(length + 1, max(blocks, block + 1))

    extend(0, 0)
    return counts


def fd_at_center(f: Callable[[np.ndarray], np.ndarray], t: float, h: float, k: int) -> float:
    grid = t + h * np.arange(-3, 4)
    return float(finite_difference_derivatives(f(grid), h, k)[3])


INDEX_PAIRS_UP_TO_8 = [(k, a) for k in range(1, 9) for a in range(1, k + 1)]


class TestPartitionOracle:
    @pytest.mark.parametrize(("k", "a"), INDEX_PAIRS_UP_TO_8)
    def test_matches_exhaustive_search(self, k: int, a: int) -> None:
        deltas = [p.delta for p in enumerate_partitions(k, a)]
        assert len(deltas) == len(set(deltas))
        assert set(deltas) == brute_force_deltas(k, a)

    @pytest.mark.parametrize(("k", "a"), INDEX_PAIRS_UP_TO_8)
    def test_coefficients(self, k: int, a: int) -> None:
        for part in enumerate_partitions(k, a):
            denominator = math.prod(
                math.factorial(d) * math.factorial(l) ** d
                for l, d in enumerate(part.delta, start=1)
            )
            assert part.coefficient * denominator == math.factorial(k)

    @pytest.mark.parametrize("k", range(1, 9))
    def test_stirling_numbers_from_set_partitions(self, k: int) -> None:
        counts = set_partition_block_counts(k)
        for a in range(1, k + 1):
            assert bell_eval(k, a, [1.0] * (k - a + 1)) == counts[a]

    def test_bell_numbers(self) -> None:
        numbers = [
            sum(bell_eval(k, a, [1.0] * (k - a + 1)) for a in range(1, k + 1)) for k in range(1, 9)
        ]
        assert numbers == [1, 2, 5, 15, 52, 203, 877, 4140]

    def test_bell_recurrence(self) -> None:
        bell = [1.0] + [
            sum(bell_eval(k, a, [1.0] * (k - a + 1)) for a in range(1, k + 1)) for k in range(1, 9)
        ]
        for k in range(8):
            assert bell[k + 1] == sum(math.comb(k, i) * bell[i] for i in range(k + 1))


class TestFaaDiBrunoAgainstFiniteDifferences:
    @pytest.mark.parametrize("seed", range(20))
    def test_polynomial_of_sine(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        rho = Polynomial(rng.uniform(-1.0, 1.0, size=4))
        amp, omega = rng.uniform(0.5, 1.0, size=2)
        phase, t = rng.uniform(-1.0, 1.0, size=2)

        def phi_derivative(i: int) -> float:
            return float(amp * omega**i * math.sin(omega * t + phase + i * math.pi / 2))

        phi = phi_derivative(0)
        for k in range(1, 5):
            outer = [float(rho.deriv(a)(phi)) for a in range(1, k + 1)]
            inner = [phi_derivative(i) for i in range(1, k + 1)]
            exact = faa_di_bruno(k, outer, inner)
            fd = fd_at_center(lambda s: rho(amp * np.sin(omega * s + phase)), t, 1e-2, k)
            assert abs(exact - fd) <= 1e-5 * max(1.0, abs(exact)), (k, exact, fd)

    @pytest.mark.parametrize(
        ("scale", "t"),
        [(1.0, 0.3), (2.0, 0.6), (1.75, 1.2)],
        ids=["linear-zone", "first-blend", "second-blend"],
    )
    def test_saturation_of_sine(
        self, worked_sigma: SaturationFunction, scale: float, t: float
    ) -> None:
        phi = scale * math.sin(t)
        outer = [worked_sigma(phi, 1), worked_sigma(phi, 2)]
        inner = [scale * math.cos(t), -scale * math.sin(t)]
        exact = faa_di_bruno(2, outer, inner)
        fd = fd_at_center(lambda s: worked_sigma(scale * np.sin(s)), t, 1e-3, 2)
        assert exact == pytest.approx(fd, abs=1e-5)


class TestPartitions:
    def test_b42_index_set(self) -> None:
        parts = enumerate_partitions(4, 2)
        assert [p.delta for p in parts] == [(1, 0, 1), (0, 2, 0)]
        assert [p.coefficient for p in parts] == [4, 3]

    @pytest.mark.parametrize(("k", "total"), [(1, 1), (4, 5), (6, 11), (10, 42)])
    def test_counts_match_integer_partitions(self, k: int, total: int) -> None:
        assert sum(len(enumerate_partitions(k, a)) for a in range(1, k + 1)) == total

    def test_tuples_are_unique(self) -> None:
        deltas = [p.delta for p in enumerate_partitions(8, 3)]
        assert len(deltas) == len(set(deltas))

    @pytest.mark.parametrize(("k", "a"), [(0, 1), (3, 0), (3, 4)])
    def test_rejects_bad_indices(self, k: int, a: int) -> None:
        with pytest.raises(ValueError):
            enumerate_partitions(k, a)

    def test_tuple_constraints(self) -> None:
        with pytest.raises(ValueError, match="weighted sum"):
            PartitionTuple((2, 0, 0), k=4, a=2)


class TestBellTable:
    def test_size(self) -> None:
        table = BellTable(5)
        assert len(table) == 15
        assert (5, 5) in table
        assert (6, 1) not in table

    def test_shared_instance(self) -> None:
        assert get_bell_table(12) is get_bell_table(12)

    def test_beyond_table_rejected(self) -> None:
        with pytest.raises(ValueError, match="exceeds the table size"):
            BellTable(3).terms(4, 1)


class TestBellEval:
    @pytest.mark.parametrize(("a", "expected"), sorted(STIRLING_5.items()))
    def test_ones_give_stirling_numbers(self, a: int, expected: int) -> None:
        assert bell_eval(5, a, [1.0] * (5 - a + 1)) == expected

    def test_bell_number(self) -> None:
        assert sum(bell_eval(5, a, [1.0] * (6 - a)) for a in range(1, 6)) == 52

    def test_edges(self) -> None:
        assert bell_eval(4, 4, [3.0]) == 81.0
        assert bell_eval(4, 1, [1.0, 2.0, 3.0, 7.0]) == 7.0

    def test_polynomial_entries(self) -> None:
        x = Polynomial([0.0, 1.0])
        result = bell_eval(3, 2, [x, 2.0])
        assert np.allclose(result.coef, [0.0, 6.0])

    def test_array_entries(self) -> None:
        x1 = np.array([1.0, 2.0])
        result = bell_eval(4, 2, [x1, np.array([1.0, 1.0]), np.array([0.5, 0.5])])
        assert np.allclose(result, 4 * x1 * 0.5 + 3.0)

    def test_too_few_arguments(self) -> None:
        with pytest.raises(ValueError, match="needs 3 arguments"):
            bell_eval(4, 2, [1.0, 2.0])

    def test_upper_rejects_negative(self) -> None:
        with pytest.raises(ValueError, match="nonnegative"):
            bell_eval_upper(2, 1, [1.0, -1.0])

    def test_upper_monotone(self) -> None:
        low = bell_eval_upper(4, 2, [1.0, 1.0, 1.0])
        high = bell_eval_upper(4, 2, [1.5, 1.0, 2.0])
        assert high >= low


class TestFaaDiBruno:
    @pytest.mark.parametrize(("k", "factor"), [(1, 2.0), (2, 6.0), (3, 20.0)])
    def test_exp_of_square(self, k: int, factor: float) -> None:
        # d^k/dt^k exp(t^2) at t = 1
        outer = [math.e] * k
        inner = [2.0, 2.0, 0.0][:k]
        assert faa_di_bruno(k, outer, inner) == pytest.approx(factor * math.e)

    def test_sine_of_linear(self) -> None:
        t = np.linspace(0.0, 1.0, 5)
        w = 3.0
        # rho = sin, phi = w t: the k-th derivative is w^k sin^(k)(w t)
        outer = [np.cos(w * t), -np.sin(w * t), -np.cos(w * t)]
        inner = [np.full_like(t, w), np.zeros_like(t), np.zeros_like(t)]
        assert np.allclose(faa_di_bruno(3, outer, inner), -(w**3) * np.cos(w * t))

    def test_needs_enough_derivatives(self) -> None:
        with pytest.raises(ValueError, match="order 2"):
            faa_di_bruno(2, [1.0], [1.0, 1.0])
