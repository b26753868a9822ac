"""Moment vectors, Riesz functional, localizing matrices and the state set.

Everything downstream of this module works in a rescaled frame where the
user's box maps onto [-1, 1]^n: moment-matrix conditioning degrades
exponentially with coordinate scale, so problems are rescaled before assembly
and results mapped back afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .indexing import basis_indices, num_indices, rank
from .polynomial import CHEBYSHEV, MONOMIAL, Polynomial


class DegreeError(ValueError):
    """A moment vector does not carry moments of the required degree."""


# -- affine box scaling --------------------------------------------------------


@dataclass(frozen=True)
class BoxScaling:
    """Per-coordinate affine map between user coordinates and [-1, 1]^n.

    scaled = (user - center) / halfwidth,   user = center + halfwidth * scaled
    """

    center: tuple[float, ...]
    halfwidth: tuple[float, ...]

    @classmethod
    def from_box(cls, bounds) -> "BoxScaling":
        center = []
        halfwidth = []
        for lo, hi in bounds:
            lo, hi = float(lo), float(hi)
            if not hi > lo:
                raise ValueError(f"degenerate box interval [{lo}, {hi}]")
            center.append((lo + hi) / 2.0)
            halfwidth.append((hi - lo) / 2.0)
        return cls(tuple(center), tuple(halfwidth))

    @classmethod
    def identity(cls, n: int) -> "BoxScaling":
        return cls((0.0,) * n, (1.0,) * n)

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [(c - h, c + h) for c, h in zip(self.center, self.halfwidth)]

    def to_scaled(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - np.asarray(self.center)) / np.asarray(self.halfwidth)

    def to_user(self, points):
        pts = np.asarray(points, dtype=float)
        return np.asarray(self.center) + np.asarray(self.halfwidth) * pts

    def scale_polynomial(self, p: Polynomial) -> Polynomial:
        """Rewrite a user-coordinate polynomial over scaled coordinates."""
        return p.substitute_affine(self.center, self.halfwidth)

    def unscale_polynomial(self, p: Polynomial) -> Polynomial:
        """Rewrite a scaled-coordinate polynomial over user coordinates."""
        h = np.asarray(self.halfwidth)
        return p.substitute_affine(-np.asarray(self.center) / h, 1.0 / h)


# -- semialgebraic state set ---------------------------------------------------

BALL_RADIUS_MARGIN = 1.05


@dataclass(frozen=True)
class SemialgebraicSet:
    """The compact state set in the scaled frame.

    ``inequalities`` are the defining polynomials g_i >= 0 in scaled monomial
    coordinates; the unit polynomial g_0 = 1 is implicit.  A redundant ball
    constraint r^2 - x'x with r slightly above the scaled box half-diagonal is
    always adjoined so the compactness certificate holds trivially.
    """

    n: int
    inequalities: tuple[Polynomial, ...]
    ball_radius: float
    scaling: BoxScaling
    is_box: bool = True

    @classmethod
    def from_box(cls, bounds, extra_inequalities=(), rescale: bool = True) -> "SemialgebraicSet":
        """Box state set; by default affinely rescaled onto [-1, 1]^n.

        With ``rescale=False`` the working frame is the user frame itself:
        the defining quadratics keep the original interval endpoints and the
        ball radius covers the raw box.  That reproduces reference setups
        that assemble relaxations without coordinate normalization, at the
        cost of much worse moment-matrix conditioning.
        """
        scaling = BoxScaling.from_box(bounds)
        n = scaling.n
        gs = []
        if rescale:
            for i in range(n):
                xi = Polynomial.variable(n, i)
                gs.append(1.0 - xi * xi)
            radius = BALL_RADIUS_MARGIN * math.sqrt(n)
            scaled_extra = tuple(scaling.scale_polynomial(p) for p in extra_inequalities)
            frame = scaling
        else:
            for i, (lo, hi) in enumerate(bounds):
                xi = Polynomial.variable(n, i)
                gs.append((xi - float(lo)) * (float(hi) - xi))
            radius = BALL_RADIUS_MARGIN * math.sqrt(
                sum(max(abs(lo), abs(hi)) ** 2 for lo, hi in bounds)
            )
            scaled_extra = tuple(extra_inequalities)
            frame = BoxScaling.identity(n)
        return cls(
            n=n,
            inequalities=tuple(gs) + scaled_extra,
            ball_radius=radius,
            scaling=frame,
            is_box=not scaled_extra and rescale,
        )

    def ball_polynomial(self) -> Polynomial:
        p = Polynomial.constant(self.n, self.ball_radius ** 2)
        for i in range(self.n):
            xi = Polynomial.variable(self.n, i)
            p = p - xi * xi
        return p

    def all_inequalities(self) -> list[Polynomial]:
        """g_0 = 1, the defining g_i, and the redundant ball constraint."""
        one = Polynomial.constant(self.n, 1.0)
        return [one, *self.inequalities, self.ball_polynomial()]

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for g in self.inequalities:
            ok &= g.evaluate_many(pts) >= -tol
        return ok


# -- moment vectors --------------------------------------------------------------


@dataclass
class MomentVector:
    """Truncated pseudo-moment sequence indexed by the graded-lex enumeration."""

    n: int
    basis: str
    degree: int
    values: np.ndarray

    def __post_init__(self):
        expected = num_indices(self.n, self.degree)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (expected,):
            raise ValueError(
                f"moment vector needs {expected} entries for n={self.n}, d={self.degree}"
            )

    @classmethod
    def zeros(cls, n: int, degree: int, basis: str = MONOMIAL) -> "MomentVector":
        return cls(n, basis, degree, np.zeros(num_indices(n, degree)))

    @classmethod
    def from_dict(cls, n, degree, entries, basis=MONOMIAL) -> "MomentVector":
        vec = np.zeros(num_indices(n, degree))
        for alpha, v in entries.items():
            alpha = tuple(alpha)
            if sum(alpha) > degree:
                raise DegreeError(f"entry {alpha} exceeds degree {degree}")
            vec[rank(alpha)] = v
        return cls(n, basis, degree, vec)

    @classmethod
    def dirac(cls, point, degree: int, basis: str = MONOMIAL) -> "MomentVector":
        """Moments of a unit atom at the given point."""
        return cls.from_points([point], degree, basis)

    @classmethod
    def from_points(cls, points, degree: int, basis: str = MONOMIAL) -> "MomentVector":
        """Empirical moments (equal weights) of a sample cloud."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[1]
        vals = np.empty(num_indices(n, degree))
        for i, alpha in enumerate(basis_indices(n, degree)):
            vals[i] = Polynomial.basis_element(n, alpha, basis).evaluate_many(pts).mean()
        return cls(n, basis, degree, vals)

    @classmethod
    def uniform_box(cls, n: int, degree: int, basis: str = MONOMIAL) -> "MomentVector":
        """Moments of the uniform probability measure on [-1, 1]^n."""
        vals = np.empty(num_indices(n, degree))
        for i, alpha in enumerate(basis_indices(n, degree)):
            v = 1.0
            for e in alpha:
                v *= _lebesgue_1d(e, basis) / 2.0
            vals[i] = v
        return cls(n, basis, degree, vals)

    def value(self, alpha) -> float:
        alpha = tuple(alpha)
        if sum(alpha) > self.degree:
            raise DegreeError(f"moment {alpha} beyond degree {self.degree}")
        return float(self.values[rank(alpha)])

    def truncate(self, degree: int) -> "MomentVector":
        if degree > self.degree:
            raise DegreeError(f"cannot extend degree {self.degree} to {degree}")
        return MomentVector(
            self.n, self.basis, degree, self.values[: num_indices(self.n, degree)]
        )

    def riesz(self, p: Polynomial) -> float:
        return riesz_apply(self, p)

    def to_dict(self) -> dict[tuple[int, ...], float]:
        return {
            alpha: float(v)
            for alpha, v in zip(basis_indices(self.n, self.degree), self.values)
        }


def riesz_apply(y: MomentVector, p: Polynomial) -> float:
    """Sum of p_alpha * y_alpha; mimics integration against the pseudo-measure."""
    if p.n != y.n or p.basis != y.basis:
        raise ValueError("polynomial and moment vector use different conventions")
    if p.degree > y.degree:
        raise DegreeError(
            f"polynomial degree {p.degree} exceeds moment degree {y.degree}"
        )
    return float(sum(c * y.values[rank(a)] for a, c in p.terms.items()))


# -- linear matrix maps ----------------------------------------------------------


class LinearMatrixMap:
    """A symmetric matrix whose entries are sparse linear functionals of y.

    Stored as parallel COO-style arrays (row, col, moment index, coefficient)
    covering both triangles, so evaluation and the adjoint are single
    scatter/gather passes.
    """

    def __init__(self, size: int, nvar: int, entries):
        # entries: dict (i, j) -> dict moment_rank -> coef, upper triangle i <= j
        self.size = size
        self.nvar = nvar
        rows, cols, midx, coef = [], [], [], []
        for (i, j), functional in sorted(entries.items()):
            if i > j:
                raise ValueError("entries must be given on the upper triangle")
            for m, c in sorted(functional.items()):
                if m >= nvar:
                    raise ValueError(f"moment index {m} out of range (nvar={nvar})")
                rows.append(i)
                cols.append(j)
                midx.append(m)
                coef.append(c)
                if i != j:
                    rows.append(j)
                    cols.append(i)
                    midx.append(m)
                    coef.append(c)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.midx = np.asarray(midx, dtype=np.int64)
        self.coef = np.asarray(coef, dtype=float)
        self._csr = None

    def evaluate(self, y) -> np.ndarray:
        vec = y.values if isinstance(y, MomentVector) else np.asarray(y, dtype=float)
        out = np.zeros((self.size, self.size))
        np.add.at(out, (self.rows, self.cols), self.coef * vec[self.midx])
        return out

    def adjoint(self, W: np.ndarray) -> np.ndarray:
        out = np.zeros(self.nvar)
        np.add.at(out, self.midx, self.coef * W[self.rows, self.cols])
        return out

    def as_vec_operator(self) -> sp.csr_matrix:
        """Sparse (size^2, nvar) operator mapping y to vec of the matrix."""
        if self._csr is None:
            flat = self.rows * self.size + self.cols
            self._csr = sp.csr_matrix(
                (self.coef, (flat, self.midx)),
                shape=(self.size * self.size, self.nvar),
            )
        return self._csr

    def shift_variables(self, offset: int, nvar_total: int) -> "LinearMatrixMap":
        """Re-index onto a stacked variable vector starting at ``offset``."""
        out = LinearMatrixMap(self.size, nvar_total, {})
        out.rows = self.rows.copy()
        out.cols = self.cols.copy()
        out.midx = self.midx + offset
        out.coef = self.coef.copy()
        return out

    def to_triplets(self) -> list[tuple[int, int, int, float]]:
        order = np.lexsort((self.midx, self.cols, self.rows))
        return [
            (int(self.rows[t]), int(self.cols[t]), int(self.midx[t]), float(self.coef[t]))
            for t in order
        ]


def localizing_matrix(
    g: Polynomial, d: int, nvar: int | None = None
) -> LinearMatrixMap:
    """The localizing map M_d(g y) with entry (beta, gamma) = l_y(g b_beta b_gamma).

    Basis elements run to degree floor((d - deg g) / 2); moment indices follow
    g's basis.  ``d`` is normally even (matrix degree), though odd truncation
    degrees are accepted and simply lower the block size.
    """
    if g.degree > d:
        raise ValueError(f"deg g = {g.degree} exceeds matrix degree {d}")
    n = g.n
    di = (d - g.degree) // 2
    elems = basis_indices(n, di)
    size = len(elems)
    if nvar is None:
        nvar = num_indices(n, d)
    entries = {}
    basis_polys = [Polynomial.basis_element(n, a, g.basis) for a in elems]
    for i in range(size):
        for j in range(i, size):
            prod = g * basis_polys[i] * basis_polys[j]
            entries[(i, j)] = {rank(a): c for a, c in prod.terms.items()}
    return LinearMatrixMap(size, nvar, entries)


def moment_matrix(n: int, d: int, basis: str = MONOMIAL, nvar: int | None = None):
    return localizing_matrix(Polynomial.constant(n, 1.0, basis), d, nvar)


def _lebesgue_1d(k: int, basis: str) -> float:
    """Integral of the k-th basis polynomial over [-1, 1]."""
    if basis == MONOMIAL:
        return 2.0 / (k + 1) if k % 2 == 0 else 0.0
    if k == 1:
        return 0.0
    return (((-1.0) ** k) + 1.0) / (1.0 - k * k) if k != 0 else 2.0


def lebesgue_moment_matrix(X: SemialgebraicSet, d: int, basis: str = MONOMIAL):
    """Exact Gram matrix of basis elements against Lebesgue measure on the box.

    Works in the scaled frame, i.e. the box [-1, 1]^n; entries factor into
    closed-form one-dimensional integrals per coordinate.
    """
    if not X.is_box:
        raise ValueError("density reconstruction requires a box-shaped state set")
    n = X.n
    elems = basis_indices(n, d)
    size = len(elems)
    out = np.empty((size, size))
    if basis == MONOMIAL:
        for i, a in enumerate(elems):
            for j in range(i, size):
                b = elems[j]
                v = 1.0
                for ai, bi in zip(a, b):
                    v *= _lebesgue_1d(ai + bi, MONOMIAL)
                out[i, j] = out[j, i] = v
    else:
        for i, a in enumerate(elems):
            for j in range(i, size):
                b = elems[j]
                v = 1.0
                for ai, bi in zip(a, b):
                    v *= 0.5 * (
                        _lebesgue_1d(ai + bi, CHEBYSHEV)
                        + _lebesgue_1d(abs(ai - bi), CHEBYSHEV)
                    )
                out[i, j] = out[j, i] = v
    return out


# -- user frame <-> scaled frame -------------------------------------------------


class UserFrame:
    """Linear maps between user-coordinate monomial moments and the scaled,
    working-basis moment vector the relaxation actually optimizes."""

    def __init__(self, scaling: BoxScaling, basis: str):
        self.scaling = scaling
        self.basis = basis
        self.n = scaling.n
        self._row_cache: dict[tuple[int, ...], dict[int, float]] = {}

    def monomial_polynomial(self, alpha) -> Polynomial:
        """The user monomial u^alpha written over scaled working-basis coordinates."""
        alpha = tuple(alpha)
        p = Polynomial(self.n, {alpha: 1.0}, MONOMIAL)
        p = self.scaling.scale_polynomial(p)
        return p.change_basis(self.basis) if self.basis != MONOMIAL else p

    def monomial_row(self, alpha) -> dict[int, float]:
        """Sparse functional: scaled working moments -> user moment y_alpha."""
        alpha = tuple(alpha)
        row = self._row_cache.get(alpha)
        if row is None:
            p = self.monomial_polynomial(alpha)
            row = {rank(a): c for a, c in p.terms.items()}
            self._row_cache[alpha] = row
        return row

    def user_moments(self, y: MomentVector, degree: int | None = None):
        """User-coordinate monomial moments from a scaled working vector."""
        degree = y.degree if degree is None else degree
        out = {}
        for alpha in basis_indices(self.n, degree):
            row = self.monomial_row(alpha)
            out[alpha] = float(sum(c * y.values[m] for m, c in row.items()))
        return out

    def scaled_vector(self, user_moments: dict, degree: int) -> MomentVector:
        """Scaled working-basis moment vector from user monomial moments.

        Requires the user moments to be complete up to ``degree``.
        """
        h = np.asarray(self.scaling.halfwidth)
        shift = -np.asarray(self.scaling.center) / h
        vals = np.zeros(num_indices(self.n, degree))
        for i, beta in enumerate(basis_indices(self.n, degree)):
            p = Polynomial.basis_element(self.n, beta, self.basis)
            if self.basis != MONOMIAL:
                p = p.change_basis(MONOMIAL)
            p = p.substitute_affine(shift, 1.0 / h)
            acc = 0.0
            for a, c in p.terms.items():
                if a not in user_moments:
                    raise DegreeError(
                        f"user moments must be complete to degree {degree}; missing {a}"
                    )
                acc += c * user_moments[a]
            vals[i] = acc
        return MomentVector(self.n, self.basis, degree, vals)
