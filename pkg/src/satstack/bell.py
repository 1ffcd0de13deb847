"""Partial Bell polynomials and the Faa di Bruno formula.

The index set of ``B_{k,a}`` is the set of tuples of nonnegative integers
``(d_1, ..., d_{k-a+1})`` with ``sum d_l = a`` and ``sum l*d_l = k``.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Any

import numpy as np
from numpy.polynomial import Polynomial

DEFAULT_K_MAX = 12
INT64_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True)
class PartitionTuple:
    """Multiplicities ``delta[l-1] = d_l`` of one term of ``B_{k,a}``."""

    delta: tuple[int, ...]
    k: int
    a: int

    def __post_init__(self) -> None:
        if len(self.delta) != self.k - self.a + 1:
            raise ValueError(f"expected {self.k - self.a + 1} entries, got {len(self.delta)}")
        if any(d < 0 for d in self.delta):
            raise ValueError(f"negative multiplicity in {self.delta}")
        if sum(self.delta) != self.a:
            raise ValueError(f"sum of {self.delta} is not {self.a}")
        if sum(l * d for l, d in enumerate(self.delta, start=1)) != self.k:
            raise ValueError(f"weighted sum of {self.delta} is not {self.k}")

    @property
    def coefficient(self) -> int:
        """``k! / prod(d_l! * (l!)^d_l)``."""
        denominator = 1
        for l, d in enumerate(self.delta, start=1):
            denominator *= math.factorial(d) * math.factorial(l) ** d
        return math.factorial(self.k) // denominator


def _multiplicities(
    length: int, parts: int, weight: int, position: int = 1
) -> Iterator[tuple[int, ...]]:
    """Tuples ``(d_position, ..., d_length)`` with ``sum d = parts`` and
    ``sum l*d = weight``, largest leading entry first."""
    if position == length:
        if parts * position == weight:
            yield (parts,)
        return
    for d in range(min(parts, weight // position), -1, -1):
        rest_parts, rest_weight = parts - d, weight - position * d
        if rest_weight < (position + 1) * rest_parts or rest_weight > length * rest_parts:
            continue
        for tail in _multiplicities(length, rest_parts, rest_weight, position + 1):
            yield (d, *tail)


def enumerate_partitions(k: int, a: int) -> list[PartitionTuple]:
    """Index set of ``B_{k,a}``, each tuple once, in decreasing lexicographic order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 1 <= a <= k:
        raise ValueError(f"a must lie in [1, {k}], got {a}")
    return [PartitionTuple(delta, k, a) for delta in _multiplicities(k - a + 1, a, k)]


Term = tuple[int, PartitionTuple]


class BellTable:
    """Immutable map ``(k, a) -> ((c_delta, delta), ...)`` for ``1 <= a <= k <= k_max``."""

    def __init__(self, k_max: int = DEFAULT_K_MAX) -> None:
        if k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {k_max}")
        terms: dict[tuple[int, int], tuple[Term, ...]] = {}
        for k in range(1, k_max + 1):
            for a in range(1, k + 1):
                row = []
                for part in enumerate_partitions(k, a):
                    coefficient = part.coefficient
                    if coefficient > INT64_MAX:
                        raise OverflowError(f"c_delta of B_({k},{a}) exceeds int64")
                    row.append((coefficient, part))
                terms[(k, a)] = tuple(row)
        self.k_max = k_max
        self._terms: Mapping[tuple[int, int], tuple[Term, ...]] = MappingProxyType(terms)

    def terms(self, k: int, a: int) -> tuple[Term, ...]:
        if not 1 <= a <= k:
            raise ValueError(f"need 1 <= a <= k, got k={k}, a={a}")
        if k > self.k_max:
            raise ValueError(f"k={k} exceeds the table size {self.k_max}")
        return self._terms[(k, a)]

    def __contains__(self, key: object) -> bool:
        return key in self._terms

    def __len__(self) -> int:
        return len(self._terms)


@lru_cache(maxsize=4)
def get_bell_table(k_max: int = DEFAULT_K_MAX) -> BellTable:
    """Shared table, built once per size."""
    return BellTable(k_max)


def _table_for(k: int) -> BellTable:
    return get_bell_table(max(DEFAULT_K_MAX, k))


def bell_eval(k: int, a: int, vals: Sequence[Any]) -> Any:
    """``B_{k,a}(vals[0], ..., vals[k-a])``.

    Entries may be floats, numpy arrays (evaluated elementwise) or polynomials.
    """
    if not 1 <= a <= k:
        raise ValueError(f"need 1 <= a <= k, got k={k}, a={a}")
    if len(vals) < k - a + 1:
        raise ValueError(f"B_({k},{a}) needs {k - a + 1} arguments, got {len(vals)}")
    total: Any = 0.0
    for coefficient, part in _table_for(k).terms(k, a):
        term: Any = float(coefficient)
        for value, d in zip(vals, part.delta, strict=False):
            if d:
                term = term * value**d
        total = total + term
    return total


def _nonnegative(value: Any) -> bool:
    if isinstance(value, Polynomial):
        return bool(np.all(value.coef >= 0.0))
    return bool(np.all(np.asarray(value) >= 0.0))


def bell_eval_upper(k: int, a: int, bounds: Sequence[Any]) -> Any:
    """``B_{k,a}`` evaluated at upper bounds ``Q_l >= 0`` of derivative magnitudes."""
    if not all(_nonnegative(b) for b in bounds[: k - a + 1]):
        raise ValueError(f"bounds must be nonnegative: {list(bounds)}")
    return bell_eval(k, a, bounds)


def faa_di_bruno(k: int, outer_derivs: Sequence[Any], inner_derivs: Sequence[Any]) -> Any:
    """k-th derivative of ``rho(phi(t))`` from ``rho^(a)(phi(t))`` and ``phi^(l)(t)``.

    ``outer_derivs[a-1]`` and ``inner_derivs[l-1]`` hold the a-th and l-th
    derivatives; arrays are handled elementwise.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(outer_derivs) < k or len(inner_derivs) < k:
        raise ValueError(f"order {k} needs {k} outer and inner derivatives")
    total: Any = 0.0
    for a in range(1, k + 1):
        total = total + outer_derivs[a - 1] * bell_eval(k, a, inner_derivs[: k - a + 1])
    return total


__all__ = [
    "DEFAULT_K_MAX",
    "BellTable",
    "PartitionTuple",
    "bell_eval",
    "bell_eval_upper",
    "enumerate_partitions",
    "faa_di_bruno",
    "get_bell_table",
]
