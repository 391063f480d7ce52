"""JSON run configuration: schema, defaults, validation and problem construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .catalog import hopf_cole_constant
from .errors import AssumptionViolation, ConfigError
from .grid import PeriodicGrid
from .models import (
    diffusion_from_dict,
    discount_from_dict,
    hamiltonian_from_dict,
    potential_from_dict,
    validate_assumptions,
)
from .scheme import ProblemSpec

EXPERIMENTS = ("solve", "ergodic", "vv-gap", "adjoint", "mather", "regularize", "select",
               "theorem-a", "theorem-b", "theorem-c")

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POS_SEQ = {"type": "array", "items": _POS, "minItems": 1}

_POTENTIAL = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["cosine", "constant", "sum"]},
        "amplitude": {"type": "number"},
        "frequency": {"type": "array", "items": {"type": "integer"}, "minItems": 1, "maxItems": 2},
        "phase": {"type": "number"},
        "offset": {"type": "number"},
        "value": {"type": "number"},
        "dim": {"type": "integer", "enum": [1, 2]},
        "terms": {"type": "array", "items": {"$ref": "#/$defs/potential"}},
    },
    "additionalProperties": False,
}

_AXIS_DIFFUSION = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "constant", "degenerate"]},
        "theta": {"type": "number"},
        "k": {"type": "integer", "minimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"potential": _POTENTIAL},
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "hamiltonian": {
                    "type": "object",
                    "properties": {
                        "family": {"enum": ["mechanical"]},
                        "potential": {"$ref": "#/$defs/potential"},
                    },
                    "additionalProperties": False,
                },
                "diffusion": {"type": "array", "items": _AXIS_DIFFUSION, "minItems": 1, "maxItems": 2},
                "discount": {
                    "type": "object",
                    "properties": {
                        "family": {"enum": ["linear", "spatial_linear", "exp_spatial"]},
                        "sigma": {"$ref": "#/$defs/potential"},
                    },
                    "required": ["family"],
                    "additionalProperties": False,
                },
                "potential": {"$ref": "#/$defs/potential"},
                "c_H": {"oneOf": [{"type": "number"}, {"enum": ["estimate", "oracle"]}]},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "dim": {"type": "integer", "enum": [1, 2]},
                "n": {"type": "integer", "minimum": 8},
            },
            "required": ["n"],
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "name": {"enum": list(EXPERIMENTS)},
                "lambda": _POS,
                "lambdas": _POS_SEQ,
                "eta": _NONNEG,
                "etas": _POS_SEQ,
                "eta_rule": {"enum": ["square", "zero"]},
                "x0": {"type": "array", "items": {"oneOf": [
                    {"type": "number"},
                    {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 2}]},
                    "minItems": 1},
                "tol": _POS,
                "max_iter": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "lambda_max": _POS,
                "workers": {"type": "integer", "minimum": 1},
                "max_mode": {"type": "integer", "minimum": 1},
                "C": _POS,
                "representative": {"type": "integer", "minimum": 0},
                "refine": {"type": "array", "items": {"type": "integer", "minimum": 8}},
            },
            "required": ["name"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
            "additionalProperties": False,
        },
    },
    "required": ["model", "grid", "experiment"],
    "additionalProperties": False,
}

EXPERIMENT_DEFAULTS = {
    "eta": 0.0,
    "tol": 1e-8,
    "max_iter": 200,
    "seed": 0,
    "lambda_max": 0.5,
    "eta_rule": "square",
    "x0": [0.0],
    "max_mode": 2,
}

DEFAULT_LAMBDAS = {
    "ergodic": [1e-2, 5e-3, 2.5e-3],
    "mather": [1e-2, 4e-3, 2e-3, 1e-3],
    "select": [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125, 0.0015625],
    "theorem-a": [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125, 0.0015625],
    "theorem-c": [0.05, 0.025, 0.0125, 0.00625, 0.003125, 0.0015625],
}
DEFAULT_ETAS = {"vv-gap": [0.08, 0.04, 0.02, 0.01, 0.005], "regularize": [0.2, 0.1, 0.05]}


@dataclass
class RunConfig:
    """Validated configuration with defaults filled, plus the built problem."""

    data: dict
    problem: ProblemSpec

    @property
    def experiment(self) -> dict:
        return self.data["experiment"]

    @property
    def name(self) -> str:
        return self.data["experiment"]["name"]

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.data == other.data


def fill_defaults(data: dict) -> dict:
    d = copy.deepcopy(data)
    model = d["model"]
    grid = d["grid"]
    grid.setdefault("dim", 1)
    dim = grid["dim"]
    model.setdefault("hamiltonian", {})
    model["hamiltonian"].setdefault("family", "mechanical")
    model["hamiltonian"].setdefault("potential", {"kind": "cosine", "amplitude": 1.0, "frequency": [2] + [0] * (dim - 1)})
    model.setdefault("diffusion", [{"kind": "zero"}] * dim)
    model.setdefault("discount", {"family": "linear"})
    model.setdefault("potential", {"kind": "constant", "value": 0.0, "dim": dim})
    model.setdefault("c_H", "oracle")
    exp = d["experiment"]
    for k, v in EXPERIMENT_DEFAULTS.items():
        exp.setdefault(k, copy.deepcopy(v))
    name = exp["name"]
    if name in DEFAULT_LAMBDAS and "lambdas" not in exp:
        exp["lambdas"] = list(DEFAULT_LAMBDAS[name])
    if name in DEFAULT_ETAS and "etas" not in exp:
        exp["etas"] = list(DEFAULT_ETAS[name])
    if name in ("solve", "adjoint", "vv-gap") and "lambda" not in exp:
        exp["lambda"] = 0.01 if name != "vv-gap" else 0.05
    d.setdefault("output", {})
    d["output"].setdefault("formats", ["csv", "json"])
    return d


def oracle_constant(problem: ProblemSpec) -> float:
    """Ergodic constant where a closed form exists.

    ``max W`` when the diffusion vanishes at some maximizer of ``W`` (the
    first-order case included), the Hopf-Cole eigenvalue for constant 1D
    diffusion. Anything else must be estimated.
    """
    W = problem.hamiltonian.W
    dim = problem.grid.dim
    fine = PeriodicGrid(dim, 1024 if dim == 1 else 256)
    pts = fine.points.reshape(-1, dim)
    Wv = np.asarray(W(pts), dtype=float) * np.ones(len(pts))
    cmax = float(Wv.max())
    at_max = Wv >= cmax - 1e-12
    a = problem.diffusion.coefficients(pts)
    if np.any(at_max & (sum(np.abs(c) for c in a) <= 1e-14)):
        return cmax
    axes = problem.diffusion.axes
    if dim == 1 and axes[0].kind == "constant":
        return hopf_cole_constant(W, axes[0].theta)
    raise ConfigError("model.c_H: no closed-form ergodic constant for this model; use \"estimate\"")


def _error_path(err: jsonschema.ValidationError) -> str:
    return err.json_path


def _check_sequences(exp: dict):
    for key in ("lambdas", "etas"):
        seq = exp.get(key)
        if seq is not None and any(b >= a for a, b in zip(seq, seq[1:])):
            raise ConfigError(f"$.experiment.{key}: must be strictly decreasing")
    lmax = exp["lambda_max"]
    for key in ("lambda", "lambdas"):
        vals = exp.get(key)
        if vals is None:
            continue
        for v in np.atleast_1d(vals):
            if v > lmax:
                raise ConfigError(f"$.experiment.{key}: {v} exceeds lambda_max={lmax}")


def build_problem(data: dict) -> ProblemSpec:
    model = data["model"]
    dim = data["grid"]["dim"]
    grid = PeriodicGrid(dim, data["grid"]["n"])
    try:
        H = hamiltonian_from_dict(model["hamiltonian"])
        if H.dim != dim:
            raise ConfigError("$.model.hamiltonian.potential.frequency: length must equal grid.dim")
        diff = diffusion_from_dict(model["diffusion"])
        if diff.dim != dim:
            raise ConfigError("$.model.diffusion: one entry per axis is required")
        disc = discount_from_dict(model["discount"])
        V = potential_from_dict(model["potential"])
        if V.dim != dim:
            raise ConfigError("$.model.potential: dimension must equal grid.dim")
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"$.model: {exc}") from exc
    problem = ProblemSpec(H, grid, diff, disc, V, 0.0, data["experiment"]["lambda_max"])
    try:
        validate_assumptions(problem, 0.0)
    except AssumptionViolation as exc:
        raise ConfigError(f"$.model: assumption violated ({exc.clause}): {exc}") from exc
    c = model["c_H"]
    if c == "oracle":
        c = oracle_constant(problem)
    elif c == "estimate":
        from .solver import estimate_ergodic_constant

        c, _ = estimate_ergodic_constant(problem, eta=data["experiment"]["eta"])
    return problem.replace(c_H=float(c))


def validate(data: dict) -> RunConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_error_path(e)}: {e.message}")
    data = fill_defaults(data)
    _check_sequences(data["experiment"])
    return RunConfig(data, build_problem(data))


def parse_config(path) -> RunConfig:
    """Read, validate and default-fill a JSON config; raises ``ConfigError``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return validate(data)


def emit(config: RunConfig) -> str:
    """Canonical JSON of the default-filled configuration."""
    return json.dumps(config.data, indent=2, sort_keys=True) + "\n"
