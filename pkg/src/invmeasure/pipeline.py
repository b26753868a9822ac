"""Orchestration: config -> scaled model -> relaxation -> artifacts.

The CLI is a thin wrapper over these functions; tests drive them directly.
All output files are deterministic for a fixed config (sorted keys, no
timestamps), and every artifact embeds the config hash and tool version.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .indexing import basis_indices
from .invariance import (
    CONTINUOUS,
    CONTINUOUS_SDE,
    DISCRETE,
    MARKOV_DISCRETE,
    PF_EIGEN,
    PF_STACKS,
    SystemModel,
)
from .moment import (
    DegreeError,
    MomentVector,
    SemialgebraicSet,
    UserFrame,
)
from .objective import (
    FEASIBILITY,
    LEAST_SQUARES,
    LINEAR,
    AbsContinuity,
    ObjectiveSpec,
    TraceBound,
)
from .polynomial import MONOMIAL, Polynomial, PolynomialMap
from .reconstruct import christoffel, density, levelset_grid
from .simulate import TrajectoryConfig, escape_box_from, estimate_moments
from .solver import (
    OPTIMAL,
    ConicProgram,
    SolverOptions,
    SolveResult,
    assemble,
    dump_program,
    solve,
)


def _tool_stamp(rc: RunConfig) -> dict:
    return {
        "tool": {"name": "invmeasure", "version": __version__},
        "config_hash": rc.config_hash,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def build_state_set(rc: RunConfig) -> SemialgebraicSet:
    return SemialgebraicSet.from_box(rc.box, rescale=rc.rescale)


def build_model(rc: RunConfig):
    """Scale the user system onto [-1, 1]^n and express it in the working basis."""
    X = build_state_set(rc)
    scaling = X.scaling
    n = rc.dimension
    center = np.asarray(scaling.center)
    half = np.asarray(scaling.halfwidth)

    def to_working(p: Polynomial) -> Polynomial:
        return p.change_basis(rc.basis) if rc.basis != p.basis else p

    comps = []
    if rc.kind in (DISCRETE, PF_EIGEN):
        for j, p in enumerate(rc.dynamics_user):
            q = (scaling.scale_polynomial(p) - center[j]) * (1.0 / half[j])
            comps.append(to_working(q))
    elif rc.kind in (CONTINUOUS, CONTINUOUS_SDE):
        for j, p in enumerate(rc.dynamics_user):
            q = scaling.scale_polynomial(p) * (1.0 / half[j])
            comps.append(to_working(q))
    else:  # markov: substitute only the state block of the (x, w) space
        n_w = rc.noise.n_w
        shift = np.concatenate([center, np.zeros(n_w)])
        scale = np.concatenate([half, np.ones(n_w)])
        for j, p in enumerate(rc.dynamics_user):
            q = (p.substitute_affine(shift, scale) - center[j]) * (1.0 / half[j])
            comps.append(to_working(q))

    diffusion = None
    if rc.kind == CONTINUOUS_SDE:
        diffusion = tuple(
            tuple(
                to_working(scaling.scale_polynomial(p) * (1.0 / half[i]))
                for p in row
            )
            for i, row in enumerate(rc.diffusion_user)
        )

    model = SystemModel(
        kind=rc.kind,
        dynamics=PolynomialMap(comps),
        state_set=X,
        basis=rc.basis,
        noise=rc.noise,
        diffusion=diffusion,
        eigenvalue=rc.eigenvalue,
        diffusion_half=rc.diffusion_half,
    )
    return model, UserFrame(scaling, rc.basis)


def _alpha_value_map(items) -> dict:
    return {tuple(t["alpha"]): float(t["value"]) for t in items}


def build_objective(rc: RunConfig, model: SystemModel, d_k: int) -> ObjectiveSpec:
    node = rc.objective_raw
    kind = node.get("kind", "feasibility")
    targets = _alpha_value_map(node.get("targets", []))
    if node.get("targets_file"):
        payload = json.loads(Path(node["targets_file"]).read_text())
        targets.update(_alpha_value_map(payload["moments"]))
    coeffs = _alpha_value_map(node.get("coeffs", []))

    addons = []
    if "abs_continuity" in node:
        sub = node["abs_continuity"]
        d = sub.get("degree", d_k)
        z = MomentVector.uniform_box(model.n, d, model.basis)
        addons.append(AbsContinuity(z=z, gamma=float(sub["gamma"]), degree=d))
    if "trace_bound" in node:
        sub = node["trace_bound"]
        addons.append(
            TraceBound(gamma=float(sub["gamma"]), degree=sub.get("degree", d_k))
        )
    try:
        return ObjectiveSpec(
            kind=kind, targets=targets, coeffs=coeffs, addons=tuple(addons)
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "objective") from exc


def solver_options(rc: RunConfig) -> SolverOptions:
    return SolverOptions(**rc.solver_raw)


def assemble_from_config(rc: RunConfig):
    model, frame = build_model(rc)
    d_k = model.moment_degree(rc.order)
    spec = build_objective(rc, model, d_k)
    program = assemble(model, rc.order, spec, frame=frame, degree_cap=rc.degree_cap)
    return program, model, frame


def run_solve(rc: RunConfig, outdir: Path) -> tuple[SolveResult, Path]:
    program, model, frame = assemble_from_config(rc)
    result = solve(program, solver_options(rc))

    payload = _tool_stamp(rc)
    payload["kind"] = rc.kind
    payload["relaxation"] = {
        "order": rc.order,
        "moment_degree": program.d_k,
        "basis": rc.basis,
    }
    payload["solver"] = {
        "status": result.status,
        "iterations": result.iterations,
        "objective": result.objective_value,
        "residuals": result.residuals,
        "uniqueness_assumed": False,
    }
    L = program.stack_length
    stacks = program.stacks
    scaled_values = [result.y[s * L : (s + 1) * L].tolist() for s in range(stacks)]
    payload["internal"] = {
        "basis": program.basis,
        "degree": program.d_k,
        "box": [list(b) for b in rc.box],
        "stacks": stacks,
        "scaled_values": scaled_values,
    }
    if stacks == 1:
        user = frame.user_moments(result.moment_vector(program))
        payload["moments"] = [
            {"alpha": list(a), "value": v} for a, v in sorted(user.items(), key=lambda t: (sum(t[0]), t[0]))
        ]
    else:
        payload["pf_moments"] = {
            name: [
                {"alpha": list(a), "value": v}
                for a, v in sorted(
                    frame.user_moments(result.moment_vector(program, s)).items(),
                    key=lambda t: (sum(t[0]), t[0]),
                )
            ]
            for s, name in enumerate(PF_STACKS)
        }

    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "moments.json"
    _write_json(path, payload)
    return result, path


def run_dump_program(rc: RunConfig, outdir: Path) -> Path:
    program, _, _ = assemble_from_config(rc)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "program.txt"
    path.write_text(dump_program(program))
    return path


def run_simulate(rc: RunConfig, outdir: Path) -> Path:
    if rc.simulation_raw is None:
        raise ConfigError("simulate requires a 'simulation' section", "simulation")
    if rc.kind not in (DISCRETE, MARKOV_DISCRETE):
        raise ConfigError(
            "trajectory simulation supports discrete deterministic and markov kinds",
            "system.kind",
        )
    node = rc.simulation_raw
    cfg = TrajectoryConfig(
        initial=tuple(node["initial"]),
        iterations=node["iterations"],
        burn_in=node.get("burn_in", 1000),
        indices=tuple(tuple(a) for a in node.get("indices", ())),
        max_degree=node.get("max_degree"),
        seed=node.get("seed", 0),
        escape_box=escape_box_from(rc.box, node.get("escape_factor", 2.0)),
    )
    T = PolynomialMap(rc.dynamics_user)
    moments = estimate_moments(T, cfg, rc.noise)

    payload = _tool_stamp(rc)
    payload["moments"] = [
        {"alpha": list(a), "value": v}
        for a, v in sorted(moments.items(), key=lambda t: (sum(t[0]), t[0]))
    ]
    payload["simulation"] = {
        "initial": list(cfg.initial),
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "seed": cfg.seed,
    }
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "empirical_moments.json"
    _write_json(path, payload)
    return path


def _scaled_vector_from_file(rc: RunConfig, frame: UserFrame, payload: dict, need: int):
    """Scaled working moments from a solve output or an empirical moments file."""
    internal = payload.get("internal")
    if internal is not None and internal.get("stacks", 1) == 1:
        degree = internal["degree"]
        if degree < need:
            raise DegreeError(
                f"moments file carries degree {degree}, reconstruction needs {need}"
            )
        basis = internal["basis"]
        if basis != rc.basis:
            raise ConfigError(
                f"moments file uses basis {basis!r}, config says {rc.basis!r}",
                "relaxation.basis",
            )
        return MomentVector(
            rc.dimension, basis, degree, np.asarray(internal["scaled_values"][0])
        )
    user = _alpha_value_map(payload["moments"])
    return frame.scaled_vector(user, need)


def run_reconstruct(rc: RunConfig, moments_path: Path, outdir: Path) -> list[Path]:
    if rc.reconstruction_raw is None:
        raise ConfigError("reconstruct requires a 'reconstruction' section", "reconstruction")
    node = rc.reconstruction_raw
    model, frame = build_model(rc)
    X = model.state_set
    payload_in = json.loads(Path(moments_path).read_text())

    need = 0
    if "christoffel" in node:
        need = max(need, node["christoffel"]["degree"])
    if "density" in node:
        need = max(need, node["density"]["degree"])
    if need == 0:
        raise ConfigError(
            "reconstruction section requests nothing", "reconstruction"
        )
    y = _scaled_vector_from_file(rc, frame, payload_in, need)

    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if "density" in node:
        sub = node["density"]
        k = sub["degree"]
        dm = density(y, k, X, full_vector=sub.get("full_vector", False))
        q_scaled = dm.q
        vol = float(np.prod(frame.scaling.halfwidth))
        q_user = frame.scaling.unscale_polynomial(
            q_scaled.change_basis(MONOMIAL)
        ) * (1.0 / vol)
        payload = _tool_stamp(rc)
        payload["degree"] = k
        payload["source_truncation"] = dm.source_truncation
        payload["polynomial"] = q_user.to_json_dict()
        payload["scaled_polynomial"] = q_scaled.to_json_dict()
        payload["box"] = [list(b) for b in rc.box]
        path = outdir / "density.json"
        _write_json(path, payload)
        written.append(path)

    if "christoffel" in node:
        sub = node["christoffel"]
        d = sub["degree"]
        eps_list = sub["epsilon"]
        if isinstance(eps_list, (int, float)):
            eps_list = [float(eps_list)]
        eps_list = [float(e) for e in eps_list]
        model_first = christoffel(y, d, eps_list[0], sub.get("eps_reg"))
        levels = {e: christoffel(y, d, e, sub.get("eps_reg")).level for e in eps_list}
        q_user = frame.scaling.unscale_polynomial(
            model_first.q.change_basis(MONOMIAL)
        )
        payload = _tool_stamp(rc)
        payload["degree"] = d
        payload["eps_reg"] = model_first.eps_reg
        payload["levels"] = [
            {"epsilon": e, "gamma": levels[e]} for e in eps_list
        ]
        payload["polynomial"] = q_user.to_json_dict()
        payload["scaled_polynomial"] = model_first.q.to_json_dict()
        payload["box"] = [list(b) for b in rc.box]
        path = outdir / "christoffel.json"
        _write_json(path, payload)
        written.append(path)

        if "grid" in node:
            pts = node["grid"]["points"]
            if isinstance(pts, int):
                pts = [pts] * rc.dimension
            if len(pts) != rc.dimension:
                raise ConfigError(
                    f"grid needs {rc.dimension} point counts", "reconstruction.grid.points"
                )
            axes_user = [
                np.linspace(lo, hi, m) for (lo, hi), m in zip(rc.box, pts)
            ]
            axes_scaled = [
                (a - c) / h
                for a, c, h in zip(
                    axes_user, frame.scaling.center, frame.scaling.halfwidth
                )
            ]
            for e in eps_list:
                grid = levelset_grid(model_first.q, levels[e], axes_scaled)
                user_points = frame.scaling.to_user(grid.points)
                name = (
                    "support_grid.csv"
                    if len(eps_list) == 1
                    else f"support_grid_eps{int(round(e * 100))}.csv"
                )
                path = outdir / name
                _write_grid_csv(path, user_points, grid.values, grid.inside)
                written.append(path)
    return written


def _write_grid_csv(path: Path, points, values, inside) -> None:
    n = points.shape[1]
    header = ",".join(f"x{i + 1}" for i in range(n)) + ",q,inside"
    lines = [header]
    for row, v, flag in zip(points, values, inside):
        coords = ",".join(f"{c:.12g}" for c in row)
        lines.append(f"{coords},{v:.12g},{int(flag)}")
    path.write_text("\n".join(lines) + "\n")
