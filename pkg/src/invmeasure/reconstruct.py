"""Support and density reconstruction from a truncated moment vector.

Two complementary readouts of the same data: sublevel sets of the Christoffel
polynomial approximate the support with a probabilistic coverage guarantee,
and a linear solve against the Lebesgue moment matrix yields a signed
polynomial density whose moments match the input.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .indexing import basis_indices, num_indices
from .moment import (
    MomentVector,
    SemialgebraicSet,
    lebesgue_moment_matrix,
    moment_matrix,
)
from .polynomial import CHEBYSHEV, MONOMIAL, Polynomial


class SingularMomentMatrix(RuntimeError):
    pass


@dataclass
class ChristoffelModel:
    """Nonnegative polynomial q whose sublevel set {q <= level} covers the measure."""

    q: Polynomial
    level: float
    degree: int
    epsilon: float
    eps_reg: float
    n_basis: int

    def inside(self, points) -> np.ndarray:
        return self.q.evaluate_many(points) <= self.level


def christoffel_level(n: int, d: int, epsilon: float) -> float:
    """Coverage threshold: binom(n + d/2, n) / (1 - epsilon)."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("confidence epsilon must lie in [0, 1)")
    return comb(n + d // 2, n) / (1.0 - epsilon)


def christoffel(
    y: MomentVector, d: int, epsilon: float, eps_reg: float | None = None
) -> ChristoffelModel:
    """Build the Christoffel polynomial from moments of degree up to d.

    q(x) = v(x)' M_d(y)^{-1} v(x) with v the basis vector to degree d/2.  The
    inverse goes through a symmetric eigendecomposition with an eigenvalue
    floor: ``eps_reg`` = None floors at 1e-8 * lambda_max, 0 demands exact
    invertibility, and a positive value is used verbatim.
    """
    if d % 2 != 0:
        raise ValueError("Christoffel degree d must be even")
    if y.degree < d:
        raise ValueError(f"moments reach degree {y.degree}, need {d}")
    n = y.n
    M = moment_matrix(n, d, y.basis).evaluate(y.values[: num_indices(n, d)])
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    lam_max = float(w[-1])
    if eps_reg is None:
        floor = 1e-8 * lam_max
    elif eps_reg == 0.0:
        if w[0] <= 1e-14 * max(lam_max, 1.0):
            raise SingularMomentMatrix(
                "moment matrix is numerically singular; pass eps_reg > 0 to regularize"
            )
        floor = 0.0
    else:
        floor = float(eps_reg)
    w_reg = np.maximum(w, floor) if floor > 0 else w
    Minv = (V / w_reg) @ V.T

    elems = basis_indices(n, d // 2)
    basis_polys = [Polynomial.basis_element(n, a, y.basis) for a in elems]
    q = Polynomial.zero(n, y.basis)
    for i in range(len(elems)):
        q = q + float(Minv[i, i]) * (basis_polys[i] * basis_polys[i])
        for j in range(i + 1, len(elems)):
            q = q + (2.0 * float(Minv[i, j])) * (basis_polys[i] * basis_polys[j])
    return ChristoffelModel(
        q=q,
        level=christoffel_level(n, d, epsilon),
        degree=d,
        epsilon=epsilon,
        eps_reg=floor,
        n_basis=len(elems),
    )


def coverage_check(points, model: ChristoffelModel) -> float:
    """Fraction of sample points inside the sublevel set {q <= level}."""
    inside = model.inside(np.atleast_2d(np.asarray(points, dtype=float)))
    return float(np.mean(inside))


@dataclass
class DensityModel:
    """Signed polynomial density against Lebesgue measure on the scaled box."""

    q: Polynomial
    degree: int
    source_truncation: str

    def evaluate_many(self, points) -> np.ndarray:
        return self.q.evaluate_many(points)


def density(
    y: MomentVector, k: int, X: SemialgebraicSet, full_vector: bool = False
) -> DensityModel:
    """Solve M^L q = y for a polynomial density matching the given moments.

    By default only the first binom(n+k, n) moments enter (higher entries of
    a relaxation output are less constrained, hence less accurate); the full
    input vector is available behind ``full_vector``.  The linear solve runs
    in the Chebyshev basis, whose Lebesgue Gram matrix stays well conditioned
    at degrees where the monomial one is numerically singular.
    """
    if not X.is_box:
        raise ValueError("density reconstruction requires a box-shaped state set")
    if y.degree < k:
        raise ValueError(f"moments reach degree {y.degree}, need {k}")
    n = y.n
    degree = y.degree if full_vector else k
    truncated = y.truncate(degree)
    cheb_moments = _moments_in_chebyshev(truncated)
    ML = lebesgue_moment_matrix(X, degree, CHEBYSHEV)
    coeffs = np.linalg.solve(ML, cheb_moments)
    terms = {
        alpha: float(c) for alpha, c in zip(basis_indices(n, degree), coeffs)
    }
    q = Polynomial(n, terms, CHEBYSHEV)
    return DensityModel(
        q=q,
        degree=degree,
        source_truncation="full" if full_vector else "truncated",
    )


def _moments_in_chebyshev(y: MomentVector) -> np.ndarray:
    """Chebyshev-basis moments l_y(T_alpha) from a moment vector in any basis."""
    if y.basis == CHEBYSHEV:
        return y.values.copy()
    out = np.empty(len(y.values))
    for i, alpha in enumerate(basis_indices(y.n, y.degree)):
        p = Polynomial.basis_element(y.n, alpha, CHEBYSHEV).change_basis(MONOMIAL)
        out[i] = y.riesz(p)
    return out


@dataclass
class LevelsetGrid:
    """Evaluation of a polynomial on a rectangular grid with an inside flag."""

    points: np.ndarray   # (m, n), row-major over the grid axes
    values: np.ndarray   # (m,)
    inside: np.ndarray   # (m,) booleans
    shape: tuple[int, ...]


def levelset_grid(q: Polynomial, gamma: float, axes) -> LevelsetGrid:
    """Evaluate q on the tensor grid spanned by ``axes`` and flag q <= gamma.

    Rows are emitted in row-major order: the first coordinate varies slowest.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != q.n:
        raise ValueError(f"need {q.n} axis arrays, got {len(axes)}")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel(order="C") for m in mesh])
    vals = q.evaluate_many(pts)
    return LevelsetGrid(
        points=pts,
        values=vals,
        inside=vals <= gamma,
        shape=tuple(len(a) for a in axes),
    )
