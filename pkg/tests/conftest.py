import numpy as np
import pytest

from invmeasure.moment import MomentVector, SemialgebraicSet
from invmeasure.polynomial import PolynomialMap, parse_polynomial


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def logistic_map():
    return PolynomialMap([parse_polynomial("2*x1^2 - 1", 1)])


@pytest.fixture
def henon_map():
    return PolynomialMap(
        [parse_polynomial("1 - 1.4*x1^2 + x2", 2), parse_polynomial("0.3*x1", 2)]
    )


@pytest.fixture
def unit_interval():
    return SemialgebraicSet.from_box([(-1.0, 1.0)])


def arcsine_moments(degree: int) -> dict:
    """Monomial moments of the logistic map's physical measure on [-1, 1].

    Even moments are central binomial ratios; odd moments vanish.
    """
    from math import comb

    return {
        (j,): (comb(j, j // 2) / 2 ** j if j % 2 == 0 else 0.0)
        for j in range(degree + 1)
    }


@pytest.fixture
def arcsine():
    return arcsine_moments


def uniform_moment(j: int) -> float:
    return 1.0 / (j + 1) if j % 2 == 0 else 0.0
