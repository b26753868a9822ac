"""Convex objectives and constraint add-ons that single out one invariant measure."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .indexing import num_indices, rank
from .moment import LinearMatrixMap, MomentVector, moment_matrix
from .polynomial import Polynomial

LEAST_SQUARES = "least_squares"
LINEAR = "linear"
FEASIBILITY = "feasibility"


@dataclass(frozen=True)
class AbsContinuity:
    """Require the measure to be dominated by gamma times a reference measure.

    Adds the PSD block M_d(gamma z - y) where z are the reference moments.
    """

    z: MomentVector
    gamma: float
    degree: int

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("absolute-continuity bound gamma must be positive")
        if self.z.degree < self.degree:
            raise ValueError(
                f"reference moments reach degree {self.z.degree}, need {self.degree}"
            )


@dataclass(frozen=True)
class TraceBound:
    """Bound the trace of the moment matrix, a convex proxy for low rank."""

    gamma: float
    degree: int

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError("trace bound must be >= 1 (the trace includes y_0 = 1)")


@dataclass(frozen=True)
class ObjectiveSpec:
    """What to optimize: least-squares moment matching, a linear functional,
    or pure feasibility; plus optional measure-class add-ons."""

    kind: str = FEASIBILITY
    targets: dict = field(default_factory=dict)
    coeffs: dict = field(default_factory=dict)
    addons: tuple = ()

    def __post_init__(self):
        if self.kind not in (LEAST_SQUARES, LINEAR, FEASIBILITY):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == LEAST_SQUARES and not self.targets:
            raise ValueError("least-squares objective needs at least one target")
        if self.kind == LINEAR and not self.coeffs:
            raise ValueError("linear objective needs at least one coefficient")


class CompiledObjective:
    """The objective lowered onto the program's moment coordinates."""

    def __init__(self, kind, nvar, rows=None, targets=None, linear=None):
        self.kind = kind
        self.nvar = nvar
        self.rows = rows            # (m, nvar) for least squares
        self.targets = targets      # (m,)
        self.linear = linear        # (nvar,)

    def quadratic_terms(self):
        """P, q, const with F(y) = 1/2 y'Py + q'y + const."""
        P = np.zeros((self.nvar, self.nvar))
        q = np.zeros(self.nvar)
        const = 0.0
        if self.kind == LEAST_SQUARES:
            P = 2.0 * self.rows.T @ self.rows
            q = -2.0 * self.rows.T @ self.targets
            const = float(self.targets @ self.targets)
        elif self.kind == LINEAR:
            q = self.linear.copy()
        return P, q, const

    def value(self, y: np.ndarray) -> float:
        if self.kind == LEAST_SQUARES:
            r = self.rows @ y - self.targets
            return float(r @ r)
        if self.kind == LINEAR:
            return float(self.linear @ y)
        return 0.0


def _default_row(alpha, d_k) -> dict[int, float]:
    if sum(alpha) > d_k:
        raise ValueError(
            f"objective references moment {tuple(alpha)} beyond degree {d_k}"
        )
    return {rank(tuple(alpha)): 1.0}


def compile_objective(
    spec: ObjectiveSpec, nvar: int, d_k: int, row_fn=None
) -> CompiledObjective:
    """Lower an ObjectiveSpec onto moment coordinates.

    ``row_fn(alpha) -> {rank: coef}`` converts a referenced index into a
    functional over the program variables; the default reads the coordinate
    directly (same frame, same basis).
    """
    if row_fn is None:
        row_fn = lambda alpha: _default_row(alpha, d_k)
    if spec.kind == LEAST_SQUARES:
        items = sorted(spec.targets.items(), key=lambda t: (sum(t[0]), t[0]))
        rows = np.zeros((len(items), nvar))
        targets = np.zeros(len(items))
        for i, (alpha, z) in enumerate(items):
            if sum(alpha) > d_k:
                raise ValueError(
                    f"objective references moment {tuple(alpha)} beyond degree {d_k}"
                )
            for m, c in row_fn(alpha).items():
                rows[i, m] = c
            targets[i] = z
        return CompiledObjective(LEAST_SQUARES, nvar, rows=rows, targets=targets)
    if spec.kind == LINEAR:
        c = np.zeros(nvar)
        for alpha, w in spec.coeffs.items():
            if sum(alpha) > d_k:
                raise ValueError(
                    f"objective references moment {tuple(alpha)} beyond degree {d_k}"
                )
            for m, v in row_fn(alpha).items():
                c[m] += w * v
        return CompiledObjective(LINEAR, nvar, linear=c)
    return CompiledObjective(FEASIBILITY, nvar)


def abs_continuity_block(
    z: MomentVector, gamma: float, d: int, nvar: int | None = None
):
    """PSD block M_d(gamma z - y) as (linear map in y, constant offset).

    The map is the negated moment-matrix map; the offset is gamma M_d(z).
    """
    if gamma <= 0:
        raise ValueError("absolute-continuity bound gamma must be positive")
    if z.degree < d:
        raise ValueError(f"reference moments reach degree {z.degree}, need {d}")
    mm = moment_matrix(z.n, d, z.basis, nvar=nvar or num_indices(z.n, d))
    offset = gamma * mm.evaluate(z.values[: num_indices(z.n, d)])
    negated = LinearMatrixMap(mm.size, mm.nvar, {})
    negated.rows, negated.cols = mm.rows.copy(), mm.cols.copy()
    negated.midx, negated.coef = mm.midx.copy(), -mm.coef
    return negated, offset


def trace_bound_row(n: int, basis: str, gamma: float, d: int):
    """Linear inequality trace M_d(y) <= gamma as ({rank: coef}, bound)."""
    if gamma < 1.0:
        raise ValueError("trace bound must be >= 1 (the trace includes y_0 = 1)")
    from .indexing import basis_indices

    row: dict[int, float] = {}
    for beta in basis_indices(n, d // 2):
        sq = Polynomial.basis_element(n, beta, basis)
        sq = sq * sq
        for a, c in sq.terms.items():
            r = rank(a)
            row[r] = row.get(r, 0.0) + c
    return row, float(gamma)
