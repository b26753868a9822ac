from math import comb

import numpy as np
import pytest

from invmeasure.indexing import basis_indices
from invmeasure.polynomial import (
    CHEBYSHEV,
    MONOMIAL,
    BasisMismatch,
    DegreeCapExceeded,
    ParseError,
    Polynomial,
    PolynomialMap,
    compose_basis_element,
    compose_power,
    parse_polynomial,
)


def random_poly(rng, n, degree, basis=MONOMIAL, density=0.6):
    terms = {}
    for alpha in basis_indices(n, degree):
        if rng.random() < density:
            terms[alpha] = rng.normal()
    terms[(0,) * n] = rng.normal()
    return Polynomial(n, terms, basis)


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
@pytest.mark.parametrize("n", [1, 2])
def test_arithmetic_respects_evaluation(rng, basis, n):
    pts = rng.uniform(-1, 1, size=(50, n))
    for _ in range(5):
        p = random_poly(rng, n, 4, basis)
        q = random_poly(rng, n, 4, basis)
        ref_sum = p.evaluate_many(pts) + q.evaluate_many(pts)
        ref_prod = p.evaluate_many(pts) * q.evaluate_many(pts)
        scale = np.abs(ref_prod).max() + 1.0
        assert np.allclose((p + q).evaluate_many(pts), ref_sum, rtol=1e-9, atol=1e-12)
        assert np.abs((p * q).evaluate_many(pts) - ref_prod).max() <= 1e-9 * scale


def test_chebyshev_product_linearization():
    t1 = Polynomial(1, {(1,): 1.0}, CHEBYSHEV)
    prod = t1 * t1
    assert prod.terms == {(0,): 0.5, (2,): 0.5}
    t2 = Polynomial(1, {(2,): 1.0}, CHEBYSHEV)
    assert (t1 * t2).terms == {(1,): 0.5, (3,): 0.5}


def test_zero_coefficients_dropped():
    p = Polynomial(1, {(0,): 1.0, (1,): 1e-16})
    assert (1,) not in p.terms
    q = p - Polynomial(1, {(0,): 1.0})
    assert q.is_zero()


def test_compose_power_logistic(logistic_map):
    p = compose_power(logistic_map, (1,))
    assert p.terms == {(0,): -1.0, (2,): 2.0}


def test_compose_power_empty_alpha(henon_map):
    p = compose_power(henon_map, (0, 0))
    assert p.terms == {(0, 0): 1.0}


def test_compose_power_henon_square(rng, henon_map):
    p = compose_power(henon_map, (2, 0))
    pts = rng.uniform(-1, 1, size=(20, 2))
    direct = henon_map.components[0].evaluate_many(pts) ** 2
    assert np.allclose(p.evaluate_many(pts), direct, rtol=1e-10, atol=1e-12)


def test_compose_power_additive(rng, henon_map):
    pts = rng.uniform(-1, 1, size=(20, 2))
    a, b = (1, 2), (2, 1)
    ab = tuple(x + y for x, y in zip(a, b))
    lhs = compose_power(henon_map, ab).evaluate_many(pts)
    rhs = compose_power(henon_map, a).evaluate_many(pts) * compose_power(
        henon_map, b
    ).evaluate_many(pts)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_compose_power_degree_cap(henon_map):
    with pytest.raises(DegreeCapExceeded):
        compose_power(henon_map, (4, 0), max_degree=6)
    # within cap is fine
    compose_power(henon_map, (3, 0), max_degree=6)


def test_compose_basis_element_chebyshev(logistic_map):
    # T = 2x^2 - 1 is the second Chebyshev polynomial, so T_a o T = T_{2a}
    Tc = PolynomialMap([logistic_map.components[0].change_basis(CHEBYSHEV)])
    for a in range(1, 5):
        p = compose_basis_element(Tc, (a,))
        assert p.terms == {(2 * a,): 1.0}


def test_differentiate_power_rule():
    p = parse_polynomial("x1^2*x2", 2)
    assert p.differentiate(0).terms == {(1, 1): 2.0}
    assert Polynomial.constant(2, 5.0).differentiate(1).is_zero()


def test_differentiate_matches_finite_difference(rng):
    p = random_poly(rng, 2, 5)
    i = 1
    dp = p.differentiate(i)
    h = 1e-6
    for _ in range(10):
        x = rng.uniform(-0.9, 0.9, size=2)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (p.evaluate(xp) - p.evaluate(xm)) / (2 * h)
        assert abs(dp.evaluate(x) - fd) <= 1e-6 * (1 + abs(fd))


def test_differentiate_requires_monomial():
    p = Polynomial(1, {(2,): 1.0}, CHEBYSHEV)
    with pytest.raises(BasisMismatch):
        p.differentiate(0)


def test_change_basis_classical_identities():
    x2 = Polynomial(1, {(2,): 1.0})
    assert x2.change_basis(CHEBYSHEV).almost_equal(
        Polynomial(1, {(0,): 0.5, (2,): 0.5}, CHEBYSHEV), 1e-12
    )
    t2 = Polynomial(1, {(2,): 1.0}, CHEBYSHEV)
    assert t2.change_basis(MONOMIAL).almost_equal(
        Polynomial(1, {(0,): -1.0, (2,): 2.0}), 1e-12
    )


def test_change_basis_round_trip(rng):
    p = random_poly(rng, 1, 8)
    back = p.change_basis(CHEBYSHEV).change_basis(MONOMIAL)
    assert p.almost_equal(back, 1e-10)
    # and evaluation agrees in both bases
    pts = rng.uniform(-1, 1, size=(50, 1))
    assert np.allclose(
        p.evaluate_many(pts), p.change_basis(CHEBYSHEV).evaluate_many(pts), rtol=1e-9
    )


def test_multivariate_change_basis(rng):
    p = random_poly(rng, 2, 5)
    pts = rng.uniform(-1, 1, size=(30, 2))
    pc = p.change_basis(CHEBYSHEV)
    assert np.allclose(p.evaluate_many(pts), pc.evaluate_many(pts), rtol=1e-9, atol=1e-11)


def test_substitute_affine(rng):
    p = random_poly(rng, 2, 4)
    shift = np.array([0.3, -0.2])
    scale = np.array([1.5, 0.4])
    q = p.substitute_affine(shift, scale)
    for _ in range(10):
        x = rng.uniform(-1, 1, size=2)
        assert abs(q.evaluate(x) - p.evaluate(shift + scale * x)) <= 1e-10 * (
            1 + abs(p.evaluate(shift + scale * x))
        )


def test_json_round_trip(rng):
    p = random_poly(rng, 2, 3, CHEBYSHEV)
    q = Polynomial.from_json_dict(p.to_json_dict())
    assert p == q


def test_parse_polynomial():
    p = parse_polynomial("2*x1^2 - 1", 1)
    assert p.terms == {(2,): 2.0, (0,): -1.0}
    p = parse_polynomial("1 - 1.4*x1^2 + x2", 2)
    assert p.terms == {(0, 0): 1.0, (2, 0): -1.4, (0, 1): 1.0}
    p = parse_polynomial("-x2 + 0.5*x1*x2^2", 2)
    assert p.terms == {(0, 1): -1.0, (1, 2): 0.5}
    p = parse_polynomial("0.5*x1 + w1", 1, n_noise=1)
    assert p.terms == {(1, 0): 0.5, (0, 1): 1.0}


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_polynomial("2x1", 1)  # implicit multiplication not in the grammar
    with pytest.raises(ParseError):
        parse_polynomial("x3", 2)
    with pytest.raises(ParseError):
        parse_polynomial("w1", 1)
    with pytest.raises(ParseError):
        parse_polynomial("", 1)


def test_map_compile_step(henon_map):
    step = henon_map.compile_step()
    x = (0.3, -0.1)
    expected = henon_map.evaluate(np.array(x))
    assert np.allclose(step(*x), expected)


def test_enumeration_size_invariant():
    n, d = 2, 8
    assert len(basis_indices(n, d)) == comb(n + d, d)
