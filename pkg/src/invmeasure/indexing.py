"""Graded-lexicographic multi-index enumeration shared by all moment code.

A multi-index is a plain tuple of nonnegative ints.  The global ordering is
graded lexicographic: lower total degree first, ties broken by lexicographic
comparison of the exponent tuples.  Every moment vector, matrix map and
constraint row in the package indexes into this one enumeration.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb


def num_indices(n: int, d: int) -> int:
    """Number of n-variate multi-indices with total degree <= d."""
    return comb(n + d, d)


def _level(n: int, total: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        out.extend((first,) + rest for rest in _level(n - 1, total - first))
    return out


@lru_cache(maxsize=None)
def basis_indices(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices with |alpha| <= d, in graded-lex order."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if d < 0:
        raise ValueError("degree must be >= 0")
    out: list[tuple[int, ...]] = []
    for total in range(d + 1):
        out.extend(_level(n, total))
    return tuple(out)


@lru_cache(maxsize=None)
def _rank_table(n: int, d: int) -> dict[tuple[int, ...], int]:
    return {alpha: i for i, alpha in enumerate(basis_indices(n, d))}


def rank(alpha: tuple[int, ...]) -> int:
    """Position of alpha in the graded-lex enumeration of its dimension.

    The enumeration is degree-graded, so the rank does not depend on the
    truncation degree of the vector being indexed.
    """
    return _rank_table(len(alpha), sum(alpha))[alpha]


def unrank(n: int, r: int) -> tuple[int, ...]:
    """Inverse of :func:`rank` for dimension n."""
    if r < 0:
        raise ValueError("rank must be >= 0")
    d = 0
    while num_indices(n, d) <= r:
        d += 1
    return basis_indices(n, d)[r]
