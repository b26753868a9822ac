"""Linear invariance constraints A_k y = 0 for every supported system class.

Each builder turns the defining identity (pushforward equals measure, zero
generator average, eigenmeasure relation) into sparse rows over the truncated
moment vector, one row per test basis element b_alpha with |alpha| <= k.  Rows
live in the scaled frame and the model's working basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .indexing import basis_indices, num_indices, rank
from .moment import SemialgebraicSet
from .polynomial import (
    CHEBYSHEV,
    MONOMIAL,
    Polynomial,
    PolynomialMap,
    composition_family,
)

DISCRETE = "discrete"
CONTINUOUS = "continuous"
MARKOV_DISCRETE = "markov_discrete"
CONTINUOUS_SDE = "sde"
PF_EIGEN = "pf_eigen"

KINDS = (DISCRETE, CONTINUOUS, MARKOV_DISCRETE, CONTINUOUS_SDE, PF_EIGEN)

# Stacked-vector order for Perron-Frobenius eigenmeasure problems.
PF_STACKS = ("real_plus", "real_minus", "imag_plus", "imag_minus")


class NoiseMomentsMissing(ValueError):
    """The noise model lacks moments of a required degree."""


@dataclass(frozen=True)
class NoiseModel:
    """Monomial moments of the i.i.d. driving noise, plus optional sampler info.

    ``kind`` is one of two_point / uniform / gaussian / moments.  Analytic
    kinds compute any moment on demand; the bare ``moments`` kind can only
    serve what was supplied and raises otherwise.
    """

    n_w: int
    kind: str
    params: dict = field(default_factory=dict)
    supplied: dict = field(default_factory=dict)

    @classmethod
    def two_point(cls, values=(-1.0, 1.0), probs=(0.5, 0.5)) -> "NoiseModel":
        if len(values) != 2 or len(probs) != 2:
            raise ValueError("two_point noise needs two values and two probabilities")
        if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
            raise ValueError("two_point probabilities must be nonnegative and sum to 1")
        return cls(1, "two_point", {"values": tuple(values), "probs": tuple(probs)})

    @classmethod
    def uniform(cls, low: float, high: float) -> "NoiseModel":
        if not high > low:
            raise ValueError("uniform noise needs high > low")
        return cls(1, "uniform", {"low": float(low), "high": float(high)})

    @classmethod
    def gaussian(cls, mean: float = 0.0, std: float = 1.0) -> "NoiseModel":
        if std < 0:
            raise ValueError("gaussian noise needs std >= 0")
        return cls(1, "gaussian", {"mean": float(mean), "std": float(std)})

    @classmethod
    def from_moments(cls, n_w: int, moments: dict) -> "NoiseModel":
        supplied = {tuple(a): float(v) for a, v in moments.items()}
        supplied[(0,) * n_w] = 1.0
        return cls(n_w, "moments", {}, supplied)

    @classmethod
    def degenerate(cls, n_w: int = 1) -> "NoiseModel":
        """w = 0 almost surely; reduces Markov rows to deterministic ones."""
        return cls(n_w, "moments", {}, {(0,) * n_w: 1.0})

    def moment(self, gamma) -> float:
        gamma = tuple(gamma)
        if len(gamma) != self.n_w:
            raise ValueError(f"noise index {gamma} has wrong dimension")
        if self.kind == "moments":
            if gamma in self.supplied:
                return self.supplied[gamma]
            if sum(gamma) == 0:
                return 1.0
            return 0.0 if self._degenerate() else self._missing(gamma)
        k = gamma[0]
        if self.kind == "two_point":
            (a, b), (p, q) = self.params["values"], self.params["probs"]
            return p * a ** k + q * b ** k
        if self.kind == "uniform":
            a, b = self.params["low"], self.params["high"]
            return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))
        if self.kind == "gaussian":
            mu, s = self.params["mean"], self.params["std"]
            m0, m1 = 1.0, mu
            for j in range(2, k + 1):
                m0, m1 = m1, mu * m1 + (j - 1) * s * s * m0
            return m1 if k >= 1 else 1.0
        raise ValueError(f"unknown noise kind {self.kind!r}")

    def _degenerate(self) -> bool:
        return all(v == 0.0 for a, v in self.supplied.items() if sum(a) > 0)

    def _missing(self, gamma):
        raise NoiseMomentsMissing(
            f"noise moments of degree {sum(gamma)} required but not supplied "
            f"(index {gamma})"
        )

    def require_degree(self, d: int) -> None:
        if self.kind != "moments":
            return
        if self._degenerate():
            return
        for gamma in basis_indices(self.n_w, d):
            if gamma not in self.supplied:
                raise NoiseMomentsMissing(
                    f"noise moments up to degree {d} required; missing {gamma}"
                )

    def sampler(self, seed: int):
        """Counter-based generator drawing one noise vector per call."""
        rng = np.random.Generator(np.random.Philox(seed))
        if self.kind == "two_point":
            values = np.asarray(self.params["values"])
            p = self.params["probs"][1]

            def draw(size):
                return values[(rng.random((size, 1)) < p).astype(int)]

        elif self.kind == "uniform":
            lo, hi = self.params["low"], self.params["high"]

            def draw(size):
                return rng.uniform(lo, hi, size=(size, 1))

        elif self.kind == "gaussian":
            mu, s = self.params["mean"], self.params["std"]

            def draw(size):
                return rng.normal(mu, s, size=(size, self.n_w))

        else:
            raise ValueError("cannot sample from a moments-only noise model")
        return draw


@dataclass(frozen=True)
class SystemModel:
    """A polynomial system in the scaled frame, ready for row generation.

    ``dynamics`` holds the map T (discrete kinds) or the drift b (continuous
    kinds); Markov maps take the stacked (x, w) variable space.
    """

    kind: str
    dynamics: PolynomialMap
    state_set: SemialgebraicSet
    basis: str = MONOMIAL
    noise: NoiseModel | None = None
    diffusion: tuple[tuple[Polynomial, ...], ...] | None = None
    eigenvalue: complex = 1.0 + 0.0j
    diffusion_half: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        n = self.state_set.n
        if self.dynamics.output_dimension != n:
            raise ValueError("dynamics must have one component per state coordinate")
        if self.kind == MARKOV_DISCRETE:
            if self.noise is None:
                raise ValueError("Markov systems need a noise model")
            if self.dynamics.input_dimension != n + self.noise.n_w:
                raise ValueError("Markov map must act on the stacked (x, w) space")
        elif self.dynamics.input_dimension != n:
            raise ValueError("dynamics dimension does not match the state set")
        if self.kind == CONTINUOUS_SDE and self.diffusion is None:
            raise ValueError("SDE systems need a diffusion matrix")

    @property
    def n(self) -> int:
        return self.state_set.n

    def x_degree(self) -> int:
        """Degree in the state variables only (Markov maps mix in noise)."""
        if self.kind != MARKOV_DISCRETE:
            return self.dynamics.degree
        n = self.n
        deg = 0
        for p in self.dynamics.components:
            for a in p.terms:
                deg = max(deg, sum(a[:n]))
        return deg

    def w_degree(self) -> int:
        if self.kind != MARKOV_DISCRETE:
            return 0
        n = self.n
        deg = 0
        for p in self.dynamics.components:
            for a in p.terms:
                deg = max(deg, sum(a[n:]))
        return deg

    def diffusion_product(self) -> list[list[Polynomial]]:
        """The n x n polynomial matrix sigma sigma^T in monomial form."""
        sigma = self.diffusion
        n = self.n
        ncols = len(sigma[0])
        mono = [
            [p.change_basis(MONOMIAL) if p.basis != MONOMIAL else p for p in row]
            for row in sigma
        ]
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = Polynomial.zero(n)
                for l in range(ncols):
                    acc = acc + mono[i][l] * mono[j][l]
                row.append(acc)
            out.append(row)
        return out

    def moment_degree(self, k: int) -> int:
        """Truncation degree d_k carrying every row of the order-k relaxation."""
        if k < 1:
            raise ValueError("relaxation order must be >= 1")
        if self.kind in (DISCRETE, PF_EIGEN):
            return max(k * self.dynamics.degree, k)
        if self.kind == CONTINUOUS:
            return k - 1 + self.dynamics.degree
        if self.kind == MARKOV_DISCRETE:
            return max(k * self.x_degree(), k)
        a_deg = max(
            (p.degree for row in self.diffusion_product() for p in row), default=0
        )
        return max(k - 1 + self.dynamics.degree, k - 2 + a_deg, 1)


@dataclass
class EqualityBlock:
    """Sparse invariance rows over (possibly stacked) moment coordinates."""

    kind: str
    k: int
    d_k: int
    n: int
    basis: str
    stacks: int
    rows: list[dict[int, float]]

    @property
    def nvar_per_stack(self) -> int:
        return num_indices(self.n, self.d_k)

    @property
    def nvar_total(self) -> int:
        return self.stacks * self.nvar_per_stack

    def to_matrix(self) -> np.ndarray:
        out = np.zeros((len(self.rows), self.nvar_total))
        for i, row in enumerate(self.rows):
            for m, c in row.items():
                out[i, m] = c
        return out

    def residual(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return np.array(
            [sum(c * values[m] for m, c in row.items()) for row in self.rows]
        )

    def to_triplets(self) -> list[tuple[int, int, float]]:
        out = []
        for i, row in enumerate(self.rows):
            for m in sorted(row):
                out.append((i, m, row[m]))
        return out

    def export_json(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "d_k": self.d_k,
            "dimension": self.n,
            "basis": self.basis,
            "stacks": self.stacks,
            "triplets": [[i, m, c] for i, m, c in self.to_triplets()],
        }


def _row_from_poly(p: Polynomial) -> dict[int, float]:
    return {rank(a): c for a, c in p.terms.items()}


def _clean(row: dict[int, float], tol: float = 0.0) -> dict[int, float]:
    return {m: c for m, c in row.items() if abs(c) > tol}


def discrete_rows(
    T: PolynomialMap, k: int, max_degree: int | None = None
) -> EqualityBlock:
    """Rows l_y(b_alpha o T) - y_alpha = 0 for 1 <= |alpha| <= k."""
    if k < 1:
        raise ValueError("relaxation order must be >= 1")
    n = T.output_dimension
    d_k = max(k * T.degree, k)
    family = composition_family(T, k, max_degree)
    rows = []
    for alpha in basis_indices(n, k)[1:]:
        row = _row_from_poly(family[alpha])
        r = rank(alpha)
        row[r] = row.get(r, 0.0) - 1.0
        rows.append(_clean(row))
    return EqualityBlock(DISCRETE, k, d_k, n, T.basis, 1, rows)


def _as_monomial(p: Polynomial) -> Polynomial:
    return p if p.basis == MONOMIAL else p.change_basis(MONOMIAL)


def _to_working(p: Polynomial, basis: str) -> Polynomial:
    return p if p.basis == basis else p.change_basis(basis)


def continuous_rows(b: PolynomialMap, k: int) -> EqualityBlock:
    """Rows l_y(grad b_alpha . b) = 0 for 1 <= |alpha| <= k."""
    if k < 1:
        raise ValueError("relaxation order must be >= 1")
    n = b.output_dimension
    basis = b.basis
    d_k = k - 1 + b.degree
    b_mono = [_as_monomial(p) for p in b.components]
    rows = []
    for alpha in basis_indices(n, k)[1:]:
        f = _as_monomial(Polynomial.basis_element(n, alpha, basis))
        acc = Polynomial.zero(n)
        for i in range(n):
            acc = acc + f.differentiate(i) * b_mono[i]
        rows.append(_clean(_row_from_poly(_to_working(acc, basis))))
    return EqualityBlock(CONTINUOUS, k, d_k, n, basis, 1, rows)


def _markov_family(T: PolynomialMap, n: int, k: int, basis: str):
    """b_alpha o T in monomial (x, w) arithmetic, for working-basis b_alpha."""
    mono_components = [_as_monomial(p) for p in T.components]
    fams = []
    for p in mono_components:
        fam = [Polynomial.constant(p.n, 1.0)]
        if k >= 1:
            fam.append(p)
        for _ in range(2, k + 1):
            if basis == CHEBYSHEV:
                fam.append(2.0 * p * fam[-1] - fam[-2])
            else:
                fam.append(p * fam[-1])
        fams.append(fam)
    out = {}
    for alpha in basis_indices(n, k):
        q = Polynomial.constant(T.input_dimension, 1.0)
        for fam, a in zip(fams, alpha):
            if a:
                q = q * fam[a]
        out[alpha] = q
    return out


def markov_discrete_rows(
    T: PolynomialMap, noise: NoiseModel, k: int, n: int | None = None
) -> EqualityBlock:
    """Rows for x+ = T(x, w): noise-averaged pushforward equals the measure."""
    if k < 1:
        raise ValueError("relaxation order must be >= 1")
    if n is None:
        n = T.output_dimension
    n_w = T.input_dimension - n
    if n_w < 1 or (noise.n_w != n_w):
        raise ValueError(
            f"map acts on {T.input_dimension} variables but state dimension {n} "
            f"and noise dimension {noise.n_w} do not add up"
        )
    basis = T.basis
    x_deg = 0
    w_deg = 0
    for p in T.components:
        for a in p.terms:
            x_deg = max(x_deg, sum(a[:n]))
            w_deg = max(w_deg, sum(a[n:]))
    noise.require_degree(k * w_deg)
    d_k = max(k * x_deg, k)
    family = _markov_family(T, n, k, basis)
    rows = []
    for alpha in basis_indices(n, k)[1:]:
        integrated: dict[tuple[int, ...], float] = {}
        for ab, c in family[alpha].terms.items():
            beta, gamma = ab[:n], ab[n:]
            w = c * noise.moment(gamma)
            if w != 0.0:
                integrated[beta] = integrated.get(beta, 0.0) + w
        q = _to_working(Polynomial(n, integrated, MONOMIAL), basis)
        row = _row_from_poly(q)
        r = rank(alpha)
        row[r] = row.get(r, 0.0) - 1.0
        rows.append(_clean(row))
    return EqualityBlock(MARKOV_DISCRETE, k, d_k, n, basis, 1, rows)


def sde_rows(
    b: PolynomialMap,
    diffusion,
    k: int,
    half: bool = False,
) -> EqualityBlock:
    """Rows l_y(A b_alpha) = 0 for the diffusion generator.

    A f = sum_i b_i df/dx_i + c * sum_ij [sigma sigma^T]_ij d2f/dx_i dx_j with
    c = 1 by default and c = 1/2 under the ``half`` convention.
    """
    if k < 1:
        raise ValueError("relaxation order must be >= 1")
    n = b.output_dimension
    basis = b.basis
    b_mono = [_as_monomial(p) for p in b.components]
    ncols = len(diffusion[0]) if diffusion else 0
    sigma_mono = [[_as_monomial(p) for p in row] for row in diffusion]
    a_mat = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = Polynomial.zero(n)
            for l in range(ncols):
                acc = acc + sigma_mono[i][l] * sigma_mono[j][l]
            row.append(acc)
        a_mat.append(row)
    a_deg = max((p.degree for row in a_mat for p in row if not p.is_zero()), default=0)
    d_k = max(k - 1 + b.degree, k - 2 + a_deg, 1)
    factor = 0.5 if half else 1.0
    rows = []
    for alpha in basis_indices(n, k)[1:]:
        f = _as_monomial(Polynomial.basis_element(n, alpha, basis))
        acc = Polynomial.zero(n)
        grads = [f.differentiate(i) for i in range(n)]
        for i in range(n):
            acc = acc + grads[i] * b_mono[i]
            for j in range(n):
                if not a_mat[i][j].is_zero():
                    acc = acc + factor * (a_mat[i][j] * grads[i].differentiate(j))
        rows.append(_clean(_row_from_poly(_to_working(acc, basis))))
    return EqualityBlock(CONTINUOUS_SDE, k, d_k, n, basis, 1, rows)


def pf_rows(T: PolynomialMap, lam: complex, k: int) -> EqualityBlock:
    """Eigenmeasure rows over four stacked vectors (R+, R-, I+, I-).

    For each test element b_alpha the complex relation
    l(b_alpha o T) = lambda l(b_alpha) splits into a real and an imaginary row
    coupling the Jordan parts.  The alpha = 0 rows are kept whenever they are
    not identically zero (they constrain the signed masses for lambda != 1).
    The caller adds the mass normalization across the four stacks.
    """
    if k < 1:
        raise ValueError("relaxation order must be >= 1")
    n = T.output_dimension
    lam = complex(lam)
    lr, li = lam.real, lam.imag
    d_k = max(k * T.degree, k)
    L = num_indices(n, d_k)
    off = {name: i * L for i, name in enumerate(PF_STACKS)}
    family = composition_family(T, k)
    rows = []
    for alpha in basis_indices(n, k):
        c_poly = family[alpha]
        c = _row_from_poly(c_poly)
        r = rank(alpha)
        c[r] = c.get(r, 0.0) - lr

        def put(row, offset, functional, scale):
            for m, v in functional.items():
                key = offset + m
                row[key] = row.get(key, 0.0) + scale * v

        # real part: <f o T - lr f, mu_R> + li <f, mu_I> = 0
        row_a: dict[int, float] = {}
        put(row_a, off["real_plus"], c, 1.0)
        put(row_a, off["real_minus"], c, -1.0)
        if li != 0.0:
            put(row_a, off["imag_plus"], {r: 1.0}, li)
            put(row_a, off["imag_minus"], {r: 1.0}, -li)
        # imaginary part: <f o T - lr f, mu_I> - li <f, mu_R> = 0
        row_b: dict[int, float] = {}
        put(row_b, off["imag_plus"], c, 1.0)
        put(row_b, off["imag_minus"], c, -1.0)
        if li != 0.0:
            put(row_b, off["real_plus"], {r: 1.0}, -li)
            put(row_b, off["real_minus"], {r: 1.0}, li)
        row_a = _clean(row_a)
        row_b = _clean(row_b)
        if sum(alpha) == 0:
            # keep only informative mass rows
            if row_a:
                rows.append(row_a)
            if row_b:
                rows.append(row_b)
        else:
            rows.append(row_a)
            rows.append(row_b)
    return EqualityBlock(PF_EIGEN, k, d_k, n, T.basis, 4, rows)


def invariance_rows(model: SystemModel, k: int, max_degree=None) -> EqualityBlock:
    """Dispatch to the row builder matching the model kind."""
    if model.kind == DISCRETE:
        return discrete_rows(model.dynamics, k, max_degree)
    if model.kind == CONTINUOUS:
        return continuous_rows(model.dynamics, k)
    if model.kind == MARKOV_DISCRETE:
        return markov_discrete_rows(model.dynamics, model.noise, k, model.n)
    if model.kind == CONTINUOUS_SDE:
        return sde_rows(model.dynamics, model.diffusion, k, model.diffusion_half)
    return pf_rows(model.dynamics, model.eigenvalue, k)
