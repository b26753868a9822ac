"""Declarative run configuration: a versioned JSON schema and its loader.

The config is validated before any computation; unknown keys are rejected so
typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .invariance import (
    CONTINUOUS,
    CONTINUOUS_SDE,
    DISCRETE,
    MARKOV_DISCRETE,
    PF_EIGEN,
    NoiseModel,
)
from .polynomial import MONOMIAL, ParseError, Polynomial, parse_polynomial


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message if key is None else f"{key}: {message}")


_KIND_NAMES = {
    "discrete": DISCRETE,
    "continuous": CONTINUOUS,
    "markov": MARKOV_DISCRETE,
    "sde": CONTINUOUS_SDE,
    "pf": PF_EIGEN,
}

_POLY = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "c": {"type": "number"},
                },
                "required": ["alpha", "c"],
                "additionalProperties": False,
            },
        },
    ]
}

_ALPHA_VALUE = {
    "type": "object",
    "properties": {
        "alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "value": {"type": "number"},
    },
    "required": ["alpha", "value"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": 1},
        "output_dir": {"type": "string"},
        "system": {
            "type": "object",
            "properties": {
                "kind": {"enum": sorted(_KIND_NAMES)},
                "dimension": {"type": "integer", "minimum": 1},
                "box": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "minItems": 1,
                },
                "map": {"type": "array", "items": _POLY},
                "drift": {"type": "array", "items": _POLY},
                "diffusion": {"type": "array", "items": {"type": "array", "items": _POLY}},
                "noise": {
                    "type": "object",
                    "properties": {
                        "dimension": {"type": "integer", "minimum": 1},
                        "kind": {"enum": ["two_point", "uniform", "gaussian", "moments"]},
                        "values": {"type": "array", "items": {"type": "number"}},
                        "probs": {"type": "array", "items": {"type": "number"}},
                        "low": {"type": "number"},
                        "high": {"type": "number"},
                        "mean": {"type": "number"},
                        "std": {"type": "number"},
                        "moments": {"type": "array", "items": _ALPHA_VALUE},
                    },
                    "required": ["kind"],
                    "additionalProperties": False,
                },
                "eigenvalue": {
                    "type": "object",
                    "properties": {"re": {"type": "number"}, "im": {"type": "number"}},
                    "required": ["re"],
                    "additionalProperties": False,
                },
            },
            "required": ["kind", "dimension", "box"],
            "additionalProperties": False,
        },
        "relaxation": {
            "type": "object",
            "properties": {
                "order": {"type": "integer", "minimum": 1},
                "basis": {"enum": ["monomial", "chebyshev"]},
                "degree_cap": {"type": "integer", "minimum": 1},
                "diffusion_half": {"type": "boolean"},
                "rescale": {"type": "boolean"},
            },
            "required": ["order"],
            "additionalProperties": False,
        },
        "objective": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["least_squares", "linear", "feasibility"]},
                "targets": {"type": "array", "items": _ALPHA_VALUE},
                "targets_file": {"type": "string"},
                "coeffs": {"type": "array", "items": _ALPHA_VALUE},
                "abs_continuity": {
                    "type": "object",
                    "properties": {
                        "gamma": {"type": "number"},
                        "degree": {"type": "integer", "minimum": 0},
                        "reference": {"enum": ["uniform"]},
                    },
                    "required": ["gamma"],
                    "additionalProperties": False,
                },
                "trace_bound": {
                    "type": "object",
                    "properties": {
                        "gamma": {"type": "number"},
                        "degree": {"type": "integer", "minimum": 0},
                    },
                    "required": ["gamma"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "eps_primal": {"type": "number", "exclusiveMinimum": 0},
                "eps_dual": {"type": "number", "exclusiveMinimum": 0},
                "eps_psd": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "over_relaxation": {"type": "number", "exclusiveMinimum": 0},
                "tie_break_ridge": {"type": "number", "minimum": 0},
                "check_every": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "initial": {"type": "array", "items": {"type": "number"}},
                "iterations": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "indices": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
                "max_degree": {"type": "integer", "minimum": 1},
                "escape_factor": {"type": "number", "exclusiveMinimum": 1},
            },
            "required": ["initial", "iterations"],
            "additionalProperties": False,
        },
        "reconstruction": {
            "type": "object",
            "properties": {
                "christoffel": {
                    "type": "object",
                    "properties": {
                        "degree": {"type": "integer", "minimum": 2},
                        "epsilon": {
                            "oneOf": [
                                {"type": "number"},
                                {"type": "array", "items": {"type": "number"}},
                            ]
                        },
                        "eps_reg": {"type": "number", "minimum": 0},
                    },
                    "required": ["degree", "epsilon"],
                    "additionalProperties": False,
                },
                "density": {
                    "type": "object",
                    "properties": {
                        "degree": {"type": "integer", "minimum": 0},
                        "full_vector": {"type": "boolean"},
                    },
                    "required": ["degree"],
                    "additionalProperties": False,
                },
                "grid": {
                    "type": "object",
                    "properties": {
                        "points": {
                            "oneOf": [
                                {"type": "integer", "minimum": 2},
                                {"type": "array", "items": {"type": "integer", "minimum": 2}},
                            ]
                        }
                    },
                    "required": ["points"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    },
    "required": ["version", "system", "relaxation"],
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    raw: dict
    config_hash: str
    kind: str
    dimension: int
    box: list[tuple[float, float]]
    dynamics_user: list[Polynomial]
    diffusion_user: list[list[Polynomial]] | None
    noise: NoiseModel | None
    eigenvalue: complex
    order: int
    basis: str
    degree_cap: int | None
    diffusion_half: bool
    rescale: bool
    objective_raw: dict = field(default_factory=dict)
    solver_raw: dict = field(default_factory=dict)
    simulation_raw: dict | None = None
    reconstruction_raw: dict | None = None
    output_dir: str = "."


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _parse_poly_entry(entry, n, n_noise, key) -> Polynomial:
    dim = n + n_noise
    if isinstance(entry, str):
        try:
            return parse_polynomial(entry, n, n_noise)
        except ParseError as exc:
            raise ConfigError(str(exc), key) from exc
    terms = {}
    for t in entry:
        alpha = tuple(t["alpha"])
        if len(alpha) != dim:
            raise ConfigError(
                f"term exponent {list(alpha)} must have {dim} entries", key
            )
        terms[alpha] = terms.get(alpha, 0.0) + float(t["c"])
    return Polynomial(dim, terms, MONOMIAL)


def _build_noise(node: dict, key: str) -> NoiseModel:
    kind = node["kind"]
    try:
        if kind == "two_point":
            return NoiseModel.two_point(
                tuple(node.get("values", (-1.0, 1.0))),
                tuple(node.get("probs", (0.5, 0.5))),
            )
        if kind == "uniform":
            return NoiseModel.uniform(node["low"], node["high"])
        if kind == "gaussian":
            return NoiseModel.gaussian(node.get("mean", 0.0), node.get("std", 1.0))
        n_w = int(node.get("dimension", 1))
        entries = {tuple(m["alpha"]): m["value"] for m in node.get("moments", [])}
        for alpha in entries:
            if len(alpha) != n_w:
                raise ValueError(f"noise moment index {list(alpha)} has wrong dimension")
        return NoiseModel.from_moments(n_w, entries)
    except KeyError as exc:
        raise ConfigError(f"missing noise parameter {exc.args[0]!r}", key) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), key) from exc


def load_config(source) -> RunConfig:
    """Load and validate a config from a path, JSON text, or dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        key = ".".join(str(p) for p in err.absolute_path) or "(root)"
        raise ConfigError(err.message, key)

    sysnode = raw["system"]
    kind = _KIND_NAMES[sysnode["kind"]]
    n = sysnode["dimension"]
    box = [tuple(map(float, b)) for b in sysnode["box"]]
    if len(box) != n:
        raise ConfigError(f"box has {len(box)} intervals for dimension {n}", "system.box")
    for i, (lo, hi) in enumerate(box):
        if not hi > lo:
            raise ConfigError(f"empty interval [{lo}, {hi}]", f"system.box.{i}")

    noise = None
    n_noise = 0
    if kind == MARKOV_DISCRETE:
        if "noise" not in sysnode:
            raise ConfigError("markov systems need a noise model", "system.noise")
        noise = _build_noise(sysnode["noise"], "system.noise")
        n_noise = noise.n_w

    field_name = "drift" if kind in (CONTINUOUS, CONTINUOUS_SDE) else "map"
    if field_name not in sysnode:
        raise ConfigError(f"system kind requires {field_name!r}", f"system.{field_name}")
    entries = sysnode[field_name]
    if len(entries) != n:
        raise ConfigError(
            f"{field_name} has {len(entries)} components for dimension {n}",
            f"system.{field_name}",
        )
    dynamics = [
        _parse_poly_entry(p, n, n_noise, f"system.{field_name}.{i}")
        for i, p in enumerate(entries)
    ]

    diffusion = None
    if kind == CONTINUOUS_SDE:
        if "diffusion" not in sysnode:
            raise ConfigError("sde systems need a diffusion matrix", "system.diffusion")
        rows = sysnode["diffusion"]
        if len(rows) != n:
            raise ConfigError(
                f"diffusion has {len(rows)} rows for dimension {n}", "system.diffusion"
            )
        width = len(rows[0])
        diffusion = []
        for i, row in enumerate(rows):
            if len(row) != width:
                raise ConfigError("diffusion rows must have equal length", "system.diffusion")
            diffusion.append(
                [
                    _parse_poly_entry(p, n, 0, f"system.diffusion.{i}.{j}")
                    for j, p in enumerate(row)
                ]
            )

    eig = 1.0 + 0.0j
    if kind == PF_EIGEN:
        if "eigenvalue" not in sysnode:
            raise ConfigError("pf systems need an eigenvalue", "system.eigenvalue")
        node = sysnode["eigenvalue"]
        eig = complex(node["re"], node.get("im", 0.0))

    relax = raw["relaxation"]
    objective = dict(raw.get("objective", {}))
    okind = objective.get("kind", "feasibility")
    if okind == "least_squares" and not (
        objective.get("targets") or objective.get("targets_file")
    ):
        raise ConfigError("least_squares objective needs targets", "objective.targets")
    if okind == "linear" and not objective.get("coeffs"):
        raise ConfigError("linear objective needs coeffs", "objective.coeffs")
    for group in ("targets", "coeffs"):
        for i, item in enumerate(objective.get(group, [])):
            if len(item["alpha"]) != n:
                raise ConfigError(
                    f"index {item['alpha']} must have {n} entries",
                    f"objective.{group}.{i}.alpha",
                )

    sim = raw.get("simulation")
    if sim is not None and len(sim["initial"]) != n:
        raise ConfigError(
            f"initial state has {len(sim['initial'])} entries for dimension {n}",
            "simulation.initial",
        )
    if sim is not None and sim["iterations"] <= sim.get("burn_in", 1000):
        raise ConfigError(
            "iterations must exceed burn_in", "simulation.iterations"
        )

    return RunConfig(
        raw=raw,
        config_hash=config_hash(raw),
        kind=kind,
        dimension=n,
        box=box,
        dynamics_user=dynamics,
        diffusion_user=diffusion,
        noise=noise,
        eigenvalue=eig,
        order=relax["order"],
        basis=relax.get("basis", "monomial"),
        degree_cap=relax.get("degree_cap"),
        diffusion_half=relax.get("diffusion_half", False),
        rescale=relax.get("rescale", True),
        objective_raw=objective,
        solver_raw=dict(raw.get("solver", {})),
        simulation_raw=sim,
        reconstruction_raw=raw.get("reconstruction"),
        output_dir=raw.get("output_dir", "."),
    )
