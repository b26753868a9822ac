"""Invariant measures of polynomial dynamical systems via moment relaxations.

The package turns the invariance condition of a polynomial system into linear
constraints on a truncated moment sequence, bounds the moment cone with
positive-semidefinite localizing matrices, solves the resulting conic program
with an embedded deterministic splitting method, and reconstructs supports
(Christoffel sublevel sets) and polynomial densities from the recovered
moments.
"""

__version__ = "0.1.0"

from .indexing import basis_indices, num_indices, rank, unrank
from .invariance import (
    EqualityBlock,
    NoiseModel,
    SystemModel,
    continuous_rows,
    discrete_rows,
    invariance_rows,
    markov_discrete_rows,
    pf_rows,
    sde_rows,
)
from .moment import (
    BoxScaling,
    LinearMatrixMap,
    MomentVector,
    SemialgebraicSet,
    UserFrame,
    lebesgue_moment_matrix,
    localizing_matrix,
    moment_matrix,
    riesz_apply,
)
from .objective import AbsContinuity, ObjectiveSpec, TraceBound
from .polynomial import (
    CHEBYSHEV,
    MONOMIAL,
    DegreeCapExceeded,
    Polynomial,
    PolynomialMap,
    compose_basis_element,
    compose_power,
    parse_polynomial,
)
from .reconstruct import (
    ChristoffelModel,
    DensityModel,
    christoffel,
    christoffel_level,
    coverage_check,
    density,
    levelset_grid,
)
from .simulate import TrajectoryConfig, estimate_moments, simulate_trajectory
from .solver import (
    ConicProgram,
    SolveResult,
    SolverOptions,
    assemble,
    dump_program,
    project_psd,
    solve,
)
