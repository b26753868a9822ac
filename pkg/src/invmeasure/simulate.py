"""Trajectory simulation and Birkhoff-average moment estimation.

Used to produce least-squares targets for the physical-measure workflow and
empirical moment vectors for validation.  Works in user coordinates on the
original (unscaled) dynamics; deterministic and Markov discrete-time systems
only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .indexing import basis_indices
from .invariance import NoiseModel
from .polynomial import PolynomialMap


class TrajectoryEscaped(RuntimeError):
    def __init__(self, step: int, last_state):
        self.step = step
        self.last_state = tuple(float(v) for v in last_state)
        super().__init__(
            f"trajectory left the escape box at step {step}; "
            f"last in-box state {self.last_state} (the measure reached from this "
            f"initial condition is not supported in the state set)"
        )


@dataclass
class TrajectoryConfig:
    initial: tuple[float, ...]
    iterations: int
    burn_in: int = 1000
    indices: tuple[tuple[int, ...], ...] = ()
    max_degree: int | None = None
    seed: int = 0
    escape_box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.iterations <= self.burn_in or self.burn_in < 0:
            raise ValueError("need iterations > burn_in >= 0")
        if not self.indices and self.max_degree is None:
            raise ValueError("specify moment indices or a max_degree")

    def index_set(self, n: int) -> list[tuple[int, ...]]:
        if self.indices:
            return [tuple(a) for a in self.indices]
        return [a for a in basis_indices(n, self.max_degree) if sum(a) > 0]


def escape_box_from(bounds, factor: float = 2.0):
    """Default escape box: the state box inflated about its center."""
    out = []
    for lo, hi in bounds:
        c, h = (lo + hi) / 2.0, (hi - lo) / 2.0
        out.append((c - factor * h, c + factor * h))
    return tuple(out)


def _run_orbit(step, x0, iterations, lo, hi):
    n = len(x0)
    traj = np.empty((iterations, n))
    state = tuple(float(v) for v in x0)
    for t in range(iterations):
        state = step(*state)
        for i in range(n):
            if not (lo[i] <= state[i] <= hi[i]):
                raise TrajectoryEscaped(t + 1, traj[t - 1] if t else x0)
        traj[t] = state
    return traj


def _run_orbit_markov(step, x0, noise_draws, iterations, lo, hi):
    n = len(x0)
    traj = np.empty((iterations, n))
    state = tuple(float(v) for v in x0)
    for t in range(iterations):
        state = step(*state, *noise_draws[t])
        for i in range(n):
            if not (lo[i] <= state[i] <= hi[i]):
                raise TrajectoryEscaped(t + 1, traj[t - 1] if t else x0)
        traj[t] = state
    return traj


def simulate_trajectory(
    T: PolynomialMap,
    cfg: TrajectoryConfig,
    noise: NoiseModel | None = None,
) -> np.ndarray:
    """Iterate the map from cfg.initial; returns the orbit x_1 .. x_N."""
    n = T.output_dimension
    if cfg.escape_box is None:
        raise ValueError("an escape box is required")
    lo = [b[0] for b in cfg.escape_box]
    hi = [b[1] for b in cfg.escape_box]
    step = T.compile_step()
    if noise is None:
        if T.input_dimension != n:
            raise ValueError("deterministic simulation needs a square map")
        return _run_orbit(step, cfg.initial, cfg.iterations, lo, hi)
    n_w = T.input_dimension - n
    if noise.n_w != n_w:
        raise ValueError("noise dimension does not match the map")
    draws = noise.sampler(cfg.seed)(cfg.iterations)
    return _run_orbit_markov(step, cfg.initial, draws, cfg.iterations, lo, hi)


def estimate_moments(
    T: PolynomialMap,
    cfg: TrajectoryConfig,
    noise: NoiseModel | None = None,
) -> dict[tuple[int, ...], float]:
    """Birkhoff averages of monomials over the post-burn-in orbit."""
    traj = simulate_trajectory(T, cfg, noise)
    samples = traj[cfg.burn_in :]
    n = T.output_dimension
    out: dict[tuple[int, ...], float] = {}
    for alpha in cfg.index_set(n):
        acc = np.ones(len(samples))
        for i, e in enumerate(alpha):
            if e:
                acc = acc * samples[:, i] ** e
        out[tuple(alpha)] = float(acc.mean())
    return out
