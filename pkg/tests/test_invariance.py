import numpy as np
import pytest
import scipy.integrate as si
import scipy.optimize as so

from conftest import arcsine_moments
from invmeasure.indexing import basis_indices, num_indices, rank
from invmeasure.invariance import (
    NoiseModel,
    NoiseMomentsMissing,
    continuous_rows,
    discrete_rows,
    markov_discrete_rows,
    pf_rows,
    sde_rows,
)
from invmeasure.moment import MomentVector
from invmeasure.polynomial import (
    CHEBYSHEV,
    MONOMIAL,
    Polynomial,
    PolynomialMap,
    parse_polynomial,
)


def rows_equal(block_a, block_b, tol=1e-12):
    assert len(block_a.rows) == len(block_b.rows)
    for ra, rb in zip(block_a.rows, block_b.rows):
        keys = set(ra) | set(rb)
        for k in keys:
            assert abs(ra.get(k, 0.0) - rb.get(k, 0.0)) <= tol


# -- discrete ------------------------------------------------------------------


def test_logistic_first_row(logistic_map):
    blk = discrete_rows(logistic_map, 1)
    assert blk.rows == [{0: -1.0, 1: -1.0, 2: 2.0}]  # 2 y2 - y0 - y1 = 0
    # true physical moments satisfy it exactly
    assert blk.residual(np.array([1.0, 0.0, 0.5]))[0] == pytest.approx(0.0)


def test_identity_map_rows_zero():
    ident = PolynomialMap([Polynomial.variable(1, 0)])
    blk = discrete_rows(ident, 4)
    assert len(blk.rows) == 4
    assert all(not row for row in blk.rows)


def test_henon_linear_row(henon_map):
    blk = discrete_rows(henon_map, 1)
    # alpha = (0,1): 0.3 y_(1,0) - y_(0,1) = 0
    row = blk.rows[0]
    assert row == {rank((1, 0)): 0.3, rank((0, 1)): -1.0}
    # Table 2 values satisfy it: 0.3 * 0.2570 = 0.0771
    assert 0.3 * 0.2570 == pytest.approx(0.0771, abs=1e-6)


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
@pytest.mark.parametrize("fixed_point", [1.0, -0.5])
def test_logistic_fixed_points_satisfy_rows(logistic_map, basis, fixed_point):
    T = logistic_map
    if basis == CHEBYSHEV:
        T = T.change_basis(CHEBYSHEV)
    blk = discrete_rows(T, 8)
    y = MomentVector.dirac([fixed_point], blk.d_k, basis)
    assert np.max(np.abs(blk.residual(y.values))) < 1e-10


def test_row_count_and_degree(henon_map):
    k = 4
    blk = discrete_rows(henon_map, k)
    assert len(blk.rows) == num_indices(2, k) - 1
    assert blk.d_k == k * henon_map.degree


def test_rows_canonical_under_term_order():
    # the same map written with terms in different order gives identical rows
    t_a = PolynomialMap([parse_polynomial("1 - 1.4*x1^2 + x2", 2),
                         parse_polynomial("0.3*x1", 2)])
    t_b = PolynomialMap([parse_polynomial("x2 - 1.4*x1^2 + 1", 2),
                         parse_polynomial("0.3*x1", 2)])
    rows_equal(discrete_rows(t_a, 3), discrete_rows(t_b, 3))


# -- continuous ----------------------------------------------------------------


def test_linear_stable_field_row():
    b = PolynomialMap([-1.0 * Polynomial.variable(1, 0)])
    blk = continuous_rows(b, 2)
    # alpha=2 row: l(2x * (-x)) = -2 y2
    assert blk.rows[1] == {rank((2,)): -2.0}


def test_zero_field_rows_zero():
    b = PolynomialMap([Polynomial.zero(2), Polynomial.zero(2)])
    blk = continuous_rows(b, 3)
    assert all(not row for row in blk.rows)


def test_harmonic_oscillator_circle_measure():
    # b = (x2, -x1): the uniform measure on any circle of radius r is invariant
    b = PolynomialMap([Polynomial.variable(2, 1), -1.0 * Polynomial.variable(2, 0)])
    k = 4
    blk = continuous_rows(b, k)
    r = 0.7
    moments = {}
    for alpha in basis_indices(2, blk.d_k):
        f = lambda th: (r * np.cos(th)) ** alpha[0] * (r * np.sin(th)) ** alpha[1] / (
            2 * np.pi
        )
        moments[alpha], _ = si.quad(f, 0, 2 * np.pi, limit=200)
    y = MomentVector.from_dict(2, blk.d_k, moments)
    assert np.max(np.abs(blk.residual(y.values))) < 1e-8


# -- markov --------------------------------------------------------------------


def test_pure_noise_map_forces_noise_law():
    # x+ = w with w uniform on [-1, 1]: rows force y_alpha = m_alpha
    T = PolynomialMap([parse_polynomial("w1", 1, n_noise=1)])
    noise = NoiseModel.uniform(-1.0, 1.0)
    blk = markov_discrete_rows(T, noise, 4, n=1)
    for row, alpha in zip(blk.rows, basis_indices(1, 4)[1:]):
        # each row reads m_alpha * y_0 - y_alpha = 0
        assert row.get(rank(alpha), 0.0) == pytest.approx(-1.0)
        assert row.get(0, 0.0) == pytest.approx(noise.moment(alpha))
    y = MomentVector.from_dict(
        1, blk.d_k, {(j,): noise.moment((j,)) for j in range(blk.d_k + 1)}
    )
    assert np.max(np.abs(blk.residual(y.values))) < 1e-12


def test_ar1_mean_row():
    T = PolynomialMap([parse_polynomial("0.5*x1 + w1", 1, n_noise=1)])
    noise = NoiseModel.two_point((-0.25, 0.25))
    blk = markov_discrete_rows(T, noise, 1, n=1)
    # alpha=1: 0.5 y1 + E[w] y0 - y1 = -0.5 y1 = 0
    assert blk.rows[0] == {rank((1,)): -0.5}


def test_ar1_second_moment_oracle():
    # closed-form stationary recursion: y2 = E[w^2] / (1 - 1/4) = 1/12
    T = PolynomialMap([parse_polynomial("0.5*x1 + w1", 1, n_noise=1)])
    noise = NoiseModel.two_point((-0.25, 0.25))
    blk = markov_discrete_rows(T, noise, 2, n=1)
    row = blk.rows[1]  # alpha = 2
    # 0.25 y2 + 2*0.5*E[w] y1 + E[w^2] y0 - y2 = 0
    assert row[rank((2,))] == pytest.approx(-0.75)
    assert row[rank((0,))] == pytest.approx(1.0 / 16.0)
    y2 = (1.0 / 16.0) / 0.75
    assert y2 == pytest.approx(1.0 / 12.0)


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
def test_degenerate_noise_reduces_to_discrete(basis):
    det = PolynomialMap([parse_polynomial("2*x1^2 - 1", 1)])
    emb = PolynomialMap([parse_polynomial("2*x1^2 - 1 + 0*w1", 1, n_noise=1)])
    if basis == CHEBYSHEV:
        det = det.change_basis(CHEBYSHEV)
        emb = emb.change_basis(CHEBYSHEV)
    blk_det = discrete_rows(det, 4)
    blk_mark = markov_discrete_rows(emb, NoiseModel.degenerate(1), 4, n=1)
    rows_equal(blk_det, blk_mark)


def test_markov_missing_noise_moments():
    T = PolynomialMap([parse_polynomial("0.5*x1 + w1^2", 1, n_noise=1)])
    noise = NoiseModel.from_moments(1, {(1,): 0.0, (2,): 0.1})
    with pytest.raises(NoiseMomentsMissing) as exc:
        markov_discrete_rows(T, noise, 3, n=1)
    assert "degree" in str(exc.value)


# -- sde -----------------------------------------------------------------------


def test_sde_zero_diffusion_reduces_to_continuous():
    b = PolynomialMap([parse_polynomial("x2", 2), parse_polynomial("-x1 - 0.5*x2", 2)])
    sigma = [[Polynomial.zero(2)], [Polynomial.zero(2)]]
    rows_equal(continuous_rows(b, 3), sde_rows(b, sigma, 3))


def test_ou_rows_paper_convention():
    # dX = -X dt + dW with the generator carrying no 1/2 factor
    b = PolynomialMap([-1.0 * Polynomial.variable(1, 0)])
    sigma = [[Polynomial.constant(1, 1.0)]]
    blk = sde_rows(b, sigma, 2)
    assert blk.rows[0] == {rank((1,)): -1.0}           # alpha = 1: -y1 = 0
    assert blk.rows[1] == {rank((2,)): -2.0, 0: 2.0}   # alpha = 2: -2 y2 + 2 y0 = 0
    # stationary-moment recursion under the same convention: y2 = y0 = 1
    assert 2.0 / 2.0 == pytest.approx(1.0)


def test_ou_rows_half_convention():
    b = PolynomialMap([-1.0 * Polynomial.variable(1, 0)])
    sigma = [[Polynomial.constant(1, 1.0)]]
    blk = sde_rows(b, sigma, 2, half=True)
    assert blk.rows[1] == {rank((2,)): -2.0, 0: 1.0}   # -2 y2 + y0 = 0 -> y2 = 1/2


def test_ou_recursion_oracle_higher_moments():
    # l(A x^m) = 0 gives m(m-1) y_{m-2} - m y_m = 0 under the paper convention
    b = PolynomialMap([-1.0 * Polynomial.variable(1, 0)])
    sigma = [[Polynomial.constant(1, 1.0)]]
    blk = sde_rows(b, sigma, 4)
    y = {0: 1.0}
    for m in range(2, 5, 2):
        y[m] = (m - 1) * y[m - 2]  # recursion solved forward
    vec = np.zeros(num_indices(1, blk.d_k))
    vec[0] = 1.0
    for m in range(2, blk.d_k + 1, 2):
        vec[rank((m,))] = y.get(m, (m - 1) * y.get(m - 2))
        y[m] = vec[rank((m,))]
    assert np.max(np.abs(blk.residual(vec))) < 1e-9


# -- perron-frobenius ----------------------------------------------------------


def test_pf_lambda_one_reduces_to_discrete(logistic_map):
    k = 3
    blk_pf = pf_rows(logistic_map, 1.0 + 0.0j, k)
    blk_det = discrete_rows(logistic_map, k)
    L = blk_pf.nvar_per_stack
    assert len(blk_pf.rows) == 2 * (num_indices(1, k) - 1)
    # restrict row (a) to the real-plus stack: indices < L
    for i, det_row in enumerate(blk_det.rows):
        row_a = blk_pf.rows[2 * i]
        restricted = {m: c for m, c in row_a.items() if m < L}
        keys = set(restricted) | set(det_row)
        for m in keys:
            assert restricted.get(m, 0.0) == pytest.approx(det_row.get(m, 0.0))


def test_pf_two_cycle_signed_measure():
    # T(x) = -x has eigenmeasure mu = (delta_{1/2} - delta_{-1/2})/2 at lambda = -1
    T = PolynomialMap([-1.0 * Polynomial.variable(1, 0)])
    k = 4
    blk = pf_rows(T, -1.0 + 0.0j, k)
    L = blk.nvar_per_stack
    d_k = blk.d_k
    y = np.zeros(4 * L)
    y[0:L] = 0.5 * MomentVector.dirac([0.5], d_k).values      # real plus
    y[L : 2 * L] = 0.5 * MomentVector.dirac([-0.5], d_k).values  # real minus
    assert np.max(np.abs(blk.residual(y))) < 1e-12


def test_pf_imaginary_eigenvalue_mass_relations():
    # T = identity, lambda = i: the alpha = 0 rows force both signed masses to 0
    T = PolynomialMap([Polynomial.variable(1, 0)])
    blk = pf_rows(T, 1.0j, 1)
    L = blk.nvar_per_stack
    mass_rows = [r for r in blk.rows if set(r) <= {0, L, 2 * L, 3 * L}]
    assert len(mass_rows) == 2
    M = np.zeros((2, 4))
    for i, row in enumerate(mass_rows):
        for m, c in row.items():
            M[i, m // L] = c
    # rank 2 on (massR, massI) after folding the plus/minus pairs
    fold = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    assert np.linalg.matrix_rank(M @ fold) == 2


def test_pf_imaginary_eigenvalue_lp_oracle():
    # independent LP check: the k=1 program with nonnegative masses and the
    # normalization row is feasible (canceling Jordan parts represent mu = 0),
    # with the signed masses forced to zero by the alpha = 0 rows.
    T = PolynomialMap([Polynomial.variable(1, 0)])
    blk = pf_rows(T, 1.0j, 1)
    L = blk.nvar_per_stack
    nvar = 4 * L
    A_eq = blk.to_matrix()
    norm_row = np.zeros(nvar)
    for s in range(4):
        norm_row[s * L] = 1.0
    A_eq = np.vstack([A_eq, norm_row])
    b_eq = np.zeros(len(A_eq))
    b_eq[-1] = 1.0
    # bounds: masses nonnegative, |y1| <= y0 (support in [-1, 1]), y2 in [0, y0]
    res = so.linprog(
        c=np.zeros(nvar),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(0, None) if i % L == 0 else (-1, 1) for i in range(nvar)],
        method="highs",
    )
    assert res.status == 0  # feasible, not infeasible
    x = res.x
    for s0, s1 in [(0, 1), (2, 3)]:  # real pair, imaginary pair
        assert x[s0 * L] - x[s1 * L] == pytest.approx(0.0, abs=1e-9)


def test_export_json(logistic_map):
    blk = discrete_rows(logistic_map, 2)
    payload = blk.export_json()
    assert payload["kind"] == "discrete"
    assert payload["k"] == 2
    assert payload["d_k"] == 4
    assert all(len(t) == 3 for t in payload["triplets"])
