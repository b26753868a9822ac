"""Sparse multivariate polynomials over monomial and tensor-Chebyshev bases.

A polynomial is a map from multi-indices to float coefficients together with a
basis tag.  In the monomial basis the index alpha stands for x^alpha; in the
Chebyshev basis it stands for the tensor product T_{alpha_1}(x_1) * ... *
T_{alpha_n}(x_n).  Values are immutable after construction and all operations
are pure, so instances can be shared freely.
"""

from __future__ import annotations

import itertools
import math
import re
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as _np_cheb

from .indexing import basis_indices, rank

MONOMIAL = "monomial"
CHEBYSHEV = "chebyshev"
BASES = (MONOMIAL, CHEBYSHEV)

# Coefficients at or below this magnitude are numerically zero and dropped
# after every arithmetic operation.
DROP_TOL = 1e-14


class DegreeCapExceeded(RuntimeError):
    """A composition would exceed the configured degree cap."""


class BasisMismatch(ValueError):
    """Operands live in different bases or dimensions."""


def _check_compatible(p: "Polynomial", q: "Polynomial") -> None:
    if p.n != q.n or p.basis != q.basis:
        raise BasisMismatch(
            f"incompatible operands: ({p.n}, {p.basis}) vs ({q.n}, {q.basis})"
        )


class Polynomial:
    __slots__ = ("n", "basis", "terms")

    def __init__(self, n: int, terms=None, basis: str = MONOMIAL):
        if basis not in BASES:
            raise ValueError(f"unknown basis {basis!r}")
        if n < 1:
            raise ValueError("dimension must be >= 1")
        clean: dict[tuple[int, ...], float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n or any(a < 0 for a in alpha):
                raise ValueError(f"bad exponent tuple {alpha} for dimension {n}")
            c = float(c)
            if abs(c) > DROP_TOL:
                clean[alpha] = clean.get(alpha, 0.0) + c
        self.n = n
        self.basis = basis
        self.terms = clean

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, n: int, basis: str = MONOMIAL) -> "Polynomial":
        return cls(n, {}, basis)

    @classmethod
    def constant(cls, n: int, c: float, basis: str = MONOMIAL) -> "Polynomial":
        return cls(n, {(0,) * n: c}, basis)

    @classmethod
    def variable(cls, n: int, i: int, basis: str = MONOMIAL) -> "Polynomial":
        """The coordinate x_i (0-based).  Identical index in either basis."""
        alpha = tuple(1 if j == i else 0 for j in range(n))
        return cls(n, {alpha: 1.0}, basis)

    @classmethod
    def basis_element(cls, n: int, alpha, basis: str = MONOMIAL) -> "Polynomial":
        return cls(n, {tuple(alpha): 1.0}, basis)

    # -- basic queries -------------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.terms), default=0)

    def coefficient(self, alpha) -> float:
        return self.terms.get(tuple(alpha), 0.0)

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and self.n == other.n
            and self.basis == other.basis
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.n, self.basis, tuple(sorted(self.terms.items()))))

    def almost_equal(self, other: "Polynomial", tol: float = 1e-12) -> bool:
        if self.n != other.n or self.basis != other.basis:
            return False
        keys = set(self.terms) | set(other.terms)
        return all(
            abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= tol for k in keys
        )

    def __repr__(self):
        if not self.terms:
            return "0"
        sym = "x" if self.basis == MONOMIAL else "T"
        parts = []
        for alpha in sorted(self.terms, key=lambda a: (sum(a), a)):
            c = self.terms[alpha]
            mono = "*".join(
                f"{sym}{i + 1}^{e}" if e > 1 else f"{sym}{i + 1}"
                for i, e in enumerate(alpha)
                if e
            )
            parts.append(f"{c:g}*{mono}" if mono else f"{c:g}")
        return " + ".join(parts)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other, self.basis)
        _check_compatible(self, other)
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(self.n, terms, self.basis)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self.terms.items()}, self.basis)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other, self.basis)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(
                self.n, {a: c * other for a, c in self.terms.items()}, self.basis
            )
        _check_compatible(self, other)
        if self.basis == MONOMIAL:
            return self._mul_monomial(other)
        return self._mul_chebyshev(other)

    __rmul__ = __mul__

    def _mul_monomial(self, other: "Polynomial") -> "Polynomial":
        terms: dict[tuple[int, ...], float] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                key = tuple(ai + bi for ai, bi in zip(a, b))
                terms[key] = terms.get(key, 0.0) + ca * cb
        return Polynomial(self.n, terms, MONOMIAL)

    def _mul_chebyshev(self, other: "Polynomial") -> "Polynomial":
        # T_a * T_b = (T_{a+b} + T_{|a-b|}) / 2 applied per coordinate; the
        # tensor product expands into 2^n index combinations with weight 2^-n.
        terms: dict[tuple[int, ...], float] = {}
        half_n = 0.5 ** self.n
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                w = ca * cb * half_n
                choices = [(ai + bi, abs(ai - bi)) for ai, bi in zip(a, b)]
                for combo in itertools.product(*choices):
                    terms[combo] = terms.get(combo, 0.0) + w
        return Polynomial(self.n, terms, CHEBYSHEV)

    def __pow__(self, m: int) -> "Polynomial":
        if not isinstance(m, int) or m < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.constant(self.n, 1.0, self.basis)
        base = self
        while m:
            if m & 1:
                result = result * base
            base_needed = m > 1
            if base_needed:
                base = base * base
            m >>= 1
        return result

    # -- evaluation ----------------------------------------------------------

    def evaluate_many(self, points) -> np.ndarray:
        """Evaluate at an (m, n) array of points; returns shape (m,)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.shape[1] != self.n:
            raise ValueError(f"points have dimension {pts.shape[1]}, expected {self.n}")
        m = pts.shape[0]
        if not self.terms:
            return np.zeros(m)
        maxdeg = [max(a[i] for a in self.terms) for i in range(self.n)]
        tables = [
            _coordinate_table(pts[:, i], maxdeg[i], self.basis) for i in range(self.n)
        ]
        out = np.zeros(m)
        for alpha, c in self.terms.items():
            acc = np.full(m, c)
            for i, e in enumerate(alpha):
                if e:
                    acc = acc * tables[i][e]
            out += acc
        return out

    def evaluate(self, x) -> float:
        return float(self.evaluate_many(np.asarray(x, dtype=float).reshape(1, -1))[0])

    __call__ = evaluate

    # -- calculus and rewriting ----------------------------------------------

    def differentiate(self, i: int) -> "Polynomial":
        """Exact partial derivative d/dx_i; monomial basis only."""
        if self.basis != MONOMIAL:
            raise BasisMismatch("differentiate requires the monomial basis; convert first")
        terms: dict[tuple[int, ...], float] = {}
        for a, c in self.terms.items():
            if a[i] == 0:
                continue
            key = tuple(e - 1 if j == i else e for j, e in enumerate(a))
            terms[key] = terms.get(key, 0.0) + c * a[i]
        return Polynomial(self.n, terms, MONOMIAL)

    def change_basis(self, target: str) -> "Polynomial":
        """Re-express the same function in the target basis."""
        if target not in BASES:
            raise ValueError(f"unknown basis {target!r}")
        if target == self.basis:
            return self
        expand = _mono_to_cheb_1d if target == CHEBYSHEV else _cheb_to_mono_1d
        terms: dict[tuple[int, ...], float] = {}
        for alpha, c in self.terms.items():
            factors = [expand(e) for e in alpha]
            for combo in itertools.product(*(f.items() for f in factors)):
                key = tuple(k for k, _ in combo)
                w = c
                for _, v in combo:
                    w *= v
                terms[key] = terms.get(key, 0.0) + w
        return Polynomial(self.n, terms, target)

    def substitute_affine(self, shift, scale) -> "Polynomial":
        """p(shift + scale * x) with per-coordinate shift and scale (monomial basis)."""
        if self.basis != MONOMIAL:
            raise BasisMismatch("affine substitution requires the monomial basis")
        shift = np.asarray(shift, dtype=float)
        scale = np.asarray(scale, dtype=float)
        terms: dict[tuple[int, ...], float] = {}
        for alpha, c in self.terms.items():
            factors = []
            for i, e in enumerate(alpha):
                factors.append(
                    [
                        (j, math.comb(e, j) * shift[i] ** (e - j) * scale[i] ** j)
                        for j in range(e + 1)
                    ]
                )
            for combo in itertools.product(*factors):
                key = tuple(j for j, _ in combo)
                w = c
                for _, v in combo:
                    w *= v
                terms[key] = terms.get(key, 0.0) + w
        return Polynomial(self.n, terms, MONOMIAL)

    def extend_dimension(self, n_new: int) -> "Polynomial":
        """Embed into a larger variable space (new trailing coordinates unused)."""
        if n_new < self.n:
            raise ValueError("cannot shrink dimension")
        pad = (0,) * (n_new - self.n)
        return Polynomial(n_new, {a + pad: c for a, c in self.terms.items()}, self.basis)

    def project_dimension(self, n_new: int) -> "Polynomial":
        """Drop trailing coordinates; they must not appear in any term."""
        for a in self.terms:
            if any(a[n_new:]):
                raise ValueError("polynomial depends on a dropped coordinate")
        return Polynomial(n_new, {a[:n_new]: c for a, c in self.terms.items()}, self.basis)

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "basis": self.basis,
            "n": self.n,
            "terms": [
                {"alpha": list(a), "c": self.terms[a]}
                for a in sorted(self.terms, key=lambda a: (sum(a), a))
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Polynomial":
        terms = {tuple(t["alpha"]): float(t["c"]) for t in data["terms"]}
        return cls(int(data["n"]), terms, data["basis"])


def _coordinate_table(x: np.ndarray, maxdeg: int, basis: str) -> list[np.ndarray]:
    table = [np.ones_like(x)]
    if maxdeg >= 1:
        table.append(x.copy())
    for k in range(2, maxdeg + 1):
        if basis == MONOMIAL:
            table.append(table[-1] * x)
        else:
            table.append(2.0 * x * table[-1] - table[-2])
    return table


@lru_cache(maxsize=None)
def _mono_to_cheb_1d(k: int) -> dict[int, float]:
    """Chebyshev coefficients of x^k as a sparse {degree: coeff} map."""
    coeffs = _np_cheb.poly2cheb(np.eye(1, k + 1, k).ravel())
    return {j: float(c) for j, c in enumerate(coeffs) if abs(c) > DROP_TOL}


@lru_cache(maxsize=None)
def _cheb_to_mono_1d(k: int) -> dict[int, float]:
    """Monomial coefficients of T_k as a sparse {degree: coeff} map."""
    coeffs = _np_cheb.cheb2poly(np.eye(1, k + 1, k).ravel())
    return {j: float(c) for j, c in enumerate(coeffs) if abs(c) > DROP_TOL}


class PolynomialMap:
    """A tuple of polynomials sharing one variable space and basis.

    The number of components need not equal the input dimension (a Markov map
    takes (x, w) to x, for instance).
    """

    __slots__ = ("components",)

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ValueError("a map needs at least one component")
        n = components[0].n
        basis = components[0].basis
        for p in components:
            if p.n != n or p.basis != basis:
                raise BasisMismatch("map components must share dimension and basis")
        self.components = components

    @property
    def input_dimension(self) -> int:
        return self.components[0].n

    @property
    def output_dimension(self) -> int:
        return len(self.components)

    @property
    def basis(self) -> str:
        return self.components[0].basis

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.components)

    def evaluate(self, x) -> np.ndarray:
        return np.array([p.evaluate(x) for p in self.components])

    def evaluate_many(self, points) -> np.ndarray:
        return np.column_stack([p.evaluate_many(points) for p in self.components])

    def change_basis(self, target: str) -> "PolynomialMap":
        return PolynomialMap([p.change_basis(target) for p in self.components])

    def compile_step(self):
        """Build a fast python step function state -> tuple for orbit simulation.

        Requires the monomial basis.  Term-by-term code generation keeps long
        trajectory loops out of generic polynomial evaluation.
        """
        if self.basis != MONOMIAL:
            raise BasisMismatch("compile_step requires the monomial basis")
        n_in = self.input_dimension
        names = [f"s{i}" for i in range(n_in)]
        exprs = []
        for p in self.components:
            parts = []
            for alpha, c in sorted(p.terms.items(), key=lambda t: (sum(t[0]), t[0])):
                factors = [repr(c)]
                for i, e in enumerate(alpha):
                    factors.extend([names[i]] * e)
                parts.append("*".join(factors))
            exprs.append(" + ".join(parts) if parts else "0.0")
        src = "def _step({}):\n    return ({},)\n".format(
            ", ".join(names), ", ".join(exprs)
        )
        scope: dict = {}
        exec(compile(src, "<polynomial-map>", "exec"), scope)
        return scope["_step"]


def compose_power(T: PolynomialMap, alpha, max_degree: int | None = None) -> Polynomial:
    """The power product T_1^{a_1} * ... * T_m^{a_m} expanded in T's basis.

    Raises :class:`DegreeCapExceeded` when the predicted result degree would
    exceed ``max_degree``, before any expansion work happens.
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != T.output_dimension:
        raise ValueError(
            f"alpha has {len(alpha)} entries, map has {T.output_dimension} components"
        )
    predicted = sum(a * p.degree for a, p in zip(alpha, T.components))
    if max_degree is not None and predicted > max_degree:
        raise DegreeCapExceeded(
            f"composition degree {predicted} exceeds cap {max_degree}"
        )
    out = Polynomial.constant(T.input_dimension, 1.0, T.basis)
    for a, p in zip(alpha, T.components):
        if a:
            out = out * p ** a
    return out


def _univariate_in_basis(p: Polynomial, m: int, basis: str) -> list[Polynomial]:
    """B_0(p), ..., B_m(p) where B_k is the k-th univariate basis polynomial.

    For the monomial basis B_k(t) = t^k; for Chebyshev the three-term
    recurrence C_{k+1} = 2 p C_k - C_{k-1} runs inside the polynomial algebra.
    """
    fam = [Polynomial.constant(p.n, 1.0, p.basis)]
    if m >= 1:
        fam.append(p)
    for _ in range(2, m + 1):
        if basis == CHEBYSHEV:
            fam.append(2.0 * p * fam[-1] - fam[-2])
        else:
            fam.append(p * fam[-1])
    return fam


def compose_basis_element(
    T: PolynomialMap, alpha, max_degree: int | None = None
) -> Polynomial:
    """b_alpha composed with T, where b_alpha is a basis element of T's basis."""
    if T.basis == MONOMIAL:
        return compose_power(T, alpha, max_degree)
    alpha = tuple(int(a) for a in alpha)
    predicted = sum(a * p.degree for a, p in zip(alpha, T.components))
    if max_degree is not None and predicted > max_degree:
        raise DegreeCapExceeded(
            f"composition degree {predicted} exceeds cap {max_degree}"
        )
    out = Polynomial.constant(T.input_dimension, 1.0, T.basis)
    for a, p in zip(alpha, T.components):
        if a:
            out = out * _univariate_in_basis(p, a, T.basis)[a]
    return out


def composition_family(
    T: PolynomialMap, k: int, max_degree: int | None = None
) -> dict[tuple[int, ...], Polynomial]:
    """b_alpha o T for every |alpha| <= k, sharing per-coordinate recurrences."""
    fams = [
        _univariate_in_basis(p, k, T.basis if T.basis == CHEBYSHEV else MONOMIAL)
        for p in T.components
    ]
    if max_degree is not None:
        worst = k * T.degree
        if worst > max_degree:
            raise DegreeCapExceeded(f"composition degree {worst} exceeds cap {max_degree}")
    out: dict[tuple[int, ...], Polynomial] = {}
    for alpha in basis_indices(T.output_dimension, k):
        p = Polynomial.constant(T.input_dimension, 1.0, T.basis)
        for fam, a in zip(fams, alpha):
            if a:
                p = p * fam[a]
        out[alpha] = p
    return out


# -- tiny expression parser --------------------------------------------------
#
# Grammar for hand-written configs: terms joined by + or -, each term a
# product of real literals and powers like x1^2 (or w1 for noise coordinates).

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<var>[xw]\d+)|(?P<op>[-+*^]))"
)


class ParseError(ValueError):
    pass


def parse_polynomial(text: str, n: int, n_noise: int = 0) -> Polynomial:
    """Parse ``"2*x1^2 - 1"`` into a monomial-basis polynomial.

    Variables x1..xn map to the first n coordinates; w1..w{n_noise} (when
    allowed) map to the trailing noise coordinates.
    """
    dim = n + n_noise
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ParseError(f"cannot parse {text!r} at position {pos}")
            break
        pos = m.end()
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num"))))
        elif m.group("var") is not None:
            tokens.append(("var", m.group("var")))
        else:
            tokens.append(("op", m.group("op")))

    def var_index(name: str) -> int:
        idx = int(name[1:]) - 1
        if name[0] == "x":
            if not 0 <= idx < n:
                raise ParseError(f"variable {name} out of range for dimension {n}")
            return idx
        if n_noise == 0:
            raise ParseError(f"noise variable {name} not allowed here")
        if not 0 <= idx < n_noise:
            raise ParseError(f"noise variable {name} out of range")
        return n + idx

    terms: dict[tuple[int, ...], float] = {}
    i = 0
    sign = 1.0
    first = True
    while i < len(tokens):
        kind, val = tokens[i]
        if kind == "op" and val in "+-":
            sign = -1.0 if val == "-" else 1.0
            i += 1
            if i >= len(tokens):
                raise ParseError(f"dangling operator in {text!r}")
        elif not first:
            raise ParseError(f"expected + or - between terms in {text!r}")
        coeff = sign
        expo = [0] * dim
        expect_factor = True
        while i < len(tokens):
            kind, val = tokens[i]
            if kind == "op" and val in "+-":
                break
            if kind == "op" and val == "*":
                i += 1
                expect_factor = True
                continue
            if not expect_factor:
                raise ParseError(f"missing operator before {val!r} in {text!r}")
            if kind == "num":
                coeff *= val
                i += 1
            elif kind == "var":
                j = var_index(val)
                power = 1
                if i + 2 < len(tokens) and tokens[i + 1] == ("op", "^"):
                    pk, pv = tokens[i + 2]
                    if pk != "num" or pv != int(pv):
                        raise ParseError(f"exponent must be an integer in {text!r}")
                    power = int(pv)
                    i += 3
                else:
                    i += 1
                expo[j] += power
            else:
                raise ParseError(f"unexpected {val!r} in {text!r}")
            expect_factor = False
        if expect_factor:
            raise ParseError(f"empty term in {text!r}")
        key = tuple(expo)
        terms[key] = terms.get(key, 0.0) + coeff
        sign = 1.0
        first = False
    if first:
        raise ParseError("empty polynomial expression")
    return Polynomial(dim, terms, MONOMIAL)
