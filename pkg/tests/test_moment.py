import numpy as np
import pytest
import scipy.integrate as si

from conftest import uniform_moment
from invmeasure.indexing import basis_indices, num_indices
from invmeasure.moment import (
    BoxScaling,
    DegreeError,
    MomentVector,
    SemialgebraicSet,
    UserFrame,
    lebesgue_moment_matrix,
    localizing_matrix,
    moment_matrix,
    riesz_apply,
)
from invmeasure.polynomial import CHEBYSHEV, MONOMIAL, Polynomial, parse_polynomial


def uniform_vector(degree, basis=MONOMIAL):
    if basis == MONOMIAL:
        return MomentVector.from_dict(
            1, degree, {(j,): uniform_moment(j) for j in range(degree + 1)}
        )
    return MomentVector.uniform_box(1, degree, basis)


def test_riesz_at_atom():
    y = MomentVector.dirac([0.0], 4)
    p = parse_polynomial("3 + x1^2", 1)
    assert riesz_apply(y, p) == pytest.approx(3.0)


def test_riesz_uniform():
    y = uniform_vector(4)
    p = Polynomial(1, {(2,): 1.0})
    assert riesz_apply(y, p) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_riesz_linearity(rng):
    y = MomentVector(1, MONOMIAL, 5, rng.normal(size=6))
    p = Polynomial(1, {(1,): 2.0, (3,): -1.0})
    q = Polynomial(1, {(0,): 0.5, (5,): 3.0})
    a, b = rng.normal(), rng.normal()
    combo = a * p + b * q
    assert riesz_apply(y, combo) == pytest.approx(
        a * riesz_apply(y, p) + b * riesz_apply(y, q), rel=1e-12
    )


def test_riesz_degree_mismatch():
    y = MomentVector.dirac([0.5], 2)
    with pytest.raises(DegreeError):
        riesz_apply(y, Polynomial(1, {(3,): 1.0}))


def test_localizing_examples():
    # g = 1, delta_0: rank-one at the atom
    m = moment_matrix(1, 2)
    y = MomentVector.dirac([0.0], 2)
    assert np.allclose(m.evaluate(y), [[1.0, 0.0], [0.0, 0.0]])
    # g = 1, uniform on [-1, 1]
    yu = uniform_vector(2)
    assert np.allclose(m.evaluate(yu), [[1.0, 0.0], [0.0, 1.0 / 3.0]])
    # g = 1 - x^2, uniform: 1x1 block [2/3]
    g = parse_polynomial("1 - x1^2", 1)
    mg = localizing_matrix(g, 2)
    M = mg.evaluate(yu)
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(2.0 / 3.0)


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
def test_localizing_psd_for_empirical_measures(rng, basis):
    X = SemialgebraicSet.from_box([(-1, 1), (-1, 1)])
    pts = rng.uniform(-1, 1, size=(200, 2))
    d = 6
    y = MomentVector.from_points(pts, d, basis)
    for g in X.all_inequalities():
        gw = g.change_basis(basis) if basis != MONOMIAL else g
        M = localizing_matrix(gw, d).evaluate(y)
        w = np.linalg.eigvalsh(0.5 * (M + M.T))
        assert w[0] >= -1e-8 * max(1.0, np.linalg.norm(M))


def test_uniform_moment_matrix_positive_definite():
    y = uniform_vector(8)
    M = moment_matrix(1, 8).evaluate(y)
    assert np.linalg.eigvalsh(M)[0] > 0


def test_lebesgue_matrix_examples():
    X = SemialgebraicSet.from_box([(-1, 1)])
    M = lebesgue_moment_matrix(X, 1)
    assert np.allclose(M, [[2.0, 0.0], [0.0, 2.0 / 3.0]])
    X2 = SemialgebraicSet.from_box([(-1, 1), (-1, 1)])
    M2 = lebesgue_moment_matrix(X2, 2)
    assert M2[0, 0] == pytest.approx(4.0)  # box volume


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
def test_lebesgue_matrix_against_quadrature(rng, basis):
    X = SemialgebraicSet.from_box([(-1, 1)])
    d = 5
    M = lebesgue_moment_matrix(X, d, basis)
    elems = basis_indices(1, d)
    for _ in range(8):
        i, j = rng.integers(0, len(elems), size=2)
        p = Polynomial.basis_element(1, elems[i], basis) * Polynomial.basis_element(
            1, elems[j], basis
        )
        val, _ = si.quad(lambda x: p.evaluate_many(np.array([[x]]))[0], -1, 1)
        assert M[i, j] == pytest.approx(val, abs=1e-10)


def test_lebesgue_matrix_requires_box():
    X = SemialgebraicSet.from_box(
        [(-1, 1)], extra_inequalities=[parse_polynomial("x1", 1)]
    )
    with pytest.raises(ValueError):
        lebesgue_moment_matrix(X, 2)


def test_ball_constraint_always_present():
    X = SemialgebraicSet.from_box([(-2, 2), (0, 1)])
    gs = X.all_inequalities()
    assert gs[0].terms == {(0, 0): 1.0}
    ball = gs[-1]
    # radius covers the scaled box corner with margin
    assert ball.coefficient((0, 0)) == pytest.approx(
        (1.05 * np.sqrt(2)) ** 2
    )
    assert ball.coefficient((2, 0)) == -1.0
    assert ball.coefficient((0, 2)) == -1.0


def test_box_scaling_round_trip(rng):
    sc = BoxScaling.from_box([(-1.5, 1.5), (-0.4, 0.4)])
    pts = rng.uniform(-1, 1, size=(10, 2)) * np.array([1.5, 0.4])
    assert np.allclose(sc.to_user(sc.to_scaled(pts)), pts)
    p = parse_polynomial("1 - 1.4*x1^2 + x2", 2)
    ps = sc.scale_polynomial(p)
    x = rng.uniform(-1, 1, size=2)
    assert ps.evaluate(x) == pytest.approx(p.evaluate(sc.to_user(x)))
    assert sc.unscale_polynomial(ps).almost_equal(p, 1e-10)


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
def test_user_frame_round_trip(rng, basis):
    sc = BoxScaling.from_box([(-1.5, 1.5), (-0.4, 0.4)])
    frame = UserFrame(sc, basis)
    pts_user = rng.uniform(-1, 1, size=(60, 2)) * np.array([1.4, 0.35])
    d = 4
    y_scaled = MomentVector.from_points(sc.to_scaled(pts_user), d, basis)
    user = frame.user_moments(y_scaled)
    # direct empirical moments in user coordinates must agree
    for alpha, v in user.items():
        direct = np.mean(np.prod(pts_user ** np.array(alpha), axis=1))
        assert v == pytest.approx(direct, abs=1e-10)
    # and back
    y_back = frame.scaled_vector(user, d)
    assert np.allclose(y_back.values, y_scaled.values, atol=1e-10)


def test_scaled_vector_requires_complete_moments():
    frame = UserFrame(BoxScaling.from_box([(-1, 1)]), MONOMIAL)
    with pytest.raises(DegreeError):
        frame.scaled_vector({(0,): 1.0}, 2)


def test_matrix_map_triplets_deterministic():
    g = parse_polynomial("1 - x1^2", 1)
    t1 = localizing_matrix(g, 4).to_triplets()
    t2 = localizing_matrix(g, 4).to_triplets()
    assert t1 == t2
    # symmetric entries both present
    assert any(r != c for r, c, _, _ in t1)
    for r, c, m, v in t1:
        assert (c, r, m, v) in t1


def test_matrix_map_adjoint_consistency(rng):
    g = parse_polynomial("1 - x1^2", 1)
    mp = localizing_matrix(g, 4)
    y = rng.normal(size=mp.nvar)
    W = rng.normal(size=(mp.size, mp.size))
    W = 0.5 * (W + W.T)
    # <M(y), W> == <y, M^T(W)>
    lhs = float(np.sum(mp.evaluate(y) * W))
    rhs = float(y @ mp.adjoint(W))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_diagonal_domination_bound():
    # even moments of any measure on the scaled set stay below r^{2a}
    X = SemialgebraicSet.from_box([(-1, 1)])
    r = X.ball_radius
    pts = np.linspace(-0.99, 0.99, 57).reshape(-1, 1)
    y = MomentVector.from_points(pts, 8)
    for a in range(1, 5):
        v = y.value((2 * a,))
        assert -1e-12 <= v <= r ** (2 * a) + 1e-12
