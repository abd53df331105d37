"""Run configuration: JSON schema, defaults, scenario construction, suite."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    CongestionFn,
    DiscreteMeasure,
    InteractionKernel,
    Potential,
    Scenario,
    SolverSettings,
    default_eps_schedule,
)
from .sphere import build_grid


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending key path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


# family -> (required params, optional params with defaults)
MU_FAMILIES = {"uniform": ({}, {}), "von-mises": ({"kappa"}, {"pole": None})}
F_FAMILIES = {"log": (set(), {}), "log-linear": ({"alpha", "beta"}, {})}
PHI_FAMILIES = {
    "zero": (set(), {}),
    "constant": ({"a"}, {}),
    "cosine": ({"a"}, {}),
    "gaussian": ({"a", "sigma"}, {}),
}
V_FAMILIES = {"zero": (set(), {}), "linear": ({"a"}, {"pole": None})}

SOLVER_DEFAULTS = {
    "eps_start": 1.0,
    "eps_min": 1e-3,
    "eps_factor": 0.7,
    "tau": 0.5,
    "tol_fixed": 1e-8,
    "max_iter": 500,
    "sinkhorn_tol": 1e-9,
    "sinkhorn_max_iter": 100_000,
    "continuation_steps": 1,
}
ANALYSIS_DEFAULTS = {
    "apriori": True,
    "linearized": True,
    "mtw": False,
    "mtw_samples": 200,
    "fd_step": 1e-2,
}
TOP_KEYS = {"name", "dim", "resolution", "mu", "f", "phi", "V", "solver", "analysis", "output", "seed"}


@dataclass
class RunConfig:
    name: str
    dim: int
    resolution: int
    mu: dict
    f: dict
    phi: dict
    V: dict
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    analysis: dict = field(default_factory=lambda: dict(ANALYSIS_DEFAULTS))
    output: dict = field(default_factory=lambda: {"dir": None})
    seed: int = 0

    def to_dict(self) -> dict:
        return copy.deepcopy({k: getattr(self, k) for k in (
            "name", "dim", "resolution", "mu", "f", "phi", "V", "solver", "analysis", "output", "seed")})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _number(path, value, *, integer=False, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be > 0, got {value!r}")
    if nonneg and not value >= 0:
        raise ConfigError(path, f"must be >= 0, got {value!r}")
    return int(value) if integer else float(value)


def _family(path, raw, families, default):
    if raw is None:
        raw = {"family": default}
    if isinstance(raw, str):
        raw = {"family": raw}
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected a family name or object, got {raw!r}")
    fam = raw.get("family")
    if fam not in families:
        raise ConfigError(f"{path}.family", f"unknown family {fam!r}; choose from {sorted(families)}")
    required, optional = families[fam]
    allowed = set(required) | set(optional) | {"family"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", f"unknown parameter for family {fam!r}")
    for key in sorted(required):
        if key not in raw:
            raise ConfigError(f"{path}.{key}", f"missing required parameter for family {fam!r}")
    out = {"family": fam}
    for key in sorted(required):
        out[key] = _number(f"{path}.{key}", raw[key])
    for key, default_value in optional.items():
        value = raw.get(key, default_value)
        if key == "pole" and value is not None:
            if not isinstance(value, (list, tuple)) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"{path}.pole", "expected a list of numbers")
            value = [float(v) for v in value]
        out[key] = value
    return out


def _section(path, raw, defaults, validators):
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    for key in raw:
        if key not in defaults:
            raise ConfigError(f"{path}.{key}", "unknown key")
    out = dict(defaults)
    for key, value in raw.items():
        out[key] = validators[key](f"{path}.{key}", value)
    return out


def _bool(path, value):
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true/false, got {value!r}")
    return value


_SOLVER_CHECKS = {
    "eps_start": lambda p, v: _number(p, v, positive=True),
    "eps_min": lambda p, v: _number(p, v, positive=True),
    "eps_factor": lambda p, v: _number(p, v, positive=True),
    "tau": lambda p, v: _number(p, v, positive=True),
    "tol_fixed": lambda p, v: _number(p, v, positive=True),
    "max_iter": lambda p, v: _number(p, v, integer=True, positive=True),
    "sinkhorn_tol": lambda p, v: _number(p, v, positive=True),
    "sinkhorn_max_iter": lambda p, v: _number(p, v, integer=True, positive=True),
    "continuation_steps": lambda p, v: _number(p, v, integer=True, positive=True),
}
_ANALYSIS_CHECKS = {
    "apriori": _bool,
    "linearized": _bool,
    "mtw": _bool,
    "mtw_samples": lambda p, v: _number(p, v, integer=True, positive=True),
    "fd_step": lambda p, v: _number(p, v, positive=True),
}


def validate_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(key, "unknown key")
    for key in ("dim", "resolution"):
        if key not in raw:
            raise ConfigError(key, "missing required key")
    dim = _number("dim", raw["dim"], integer=True)
    if dim not in (1, 2):
        raise ConfigError("dim", f"must be 1 or 2, got {dim}")
    resolution = _number("resolution", raw["resolution"], integer=True, positive=True)
    if dim == 1 and resolution < 4:
        raise ConfigError("resolution", "S^1 grids need at least 4 nodes")
    name = raw.get("name", f"s{dim}-{resolution}")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")
    solver = _section("solver", raw.get("solver"), SOLVER_DEFAULTS, _SOLVER_CHECKS)
    if solver["eps_min"] > solver["eps_start"]:
        raise ConfigError("solver.eps_min", "must not exceed solver.eps_start")
    if not solver["eps_factor"] < 1:
        raise ConfigError("solver.eps_factor", "must be < 1")
    analysis = _section("analysis", raw.get("analysis"), ANALYSIS_DEFAULTS, _ANALYSIS_CHECKS)
    output = raw.get("output", {"dir": None})
    if not isinstance(output, dict) or set(output) - {"dir"}:
        raise ConfigError("output", "expected {\"dir\": <path or null>}")
    output = {"dir": output.get("dir")}
    if output["dir"] is not None and not isinstance(output["dir"], str):
        raise ConfigError("output.dir", "expected a path string or null")
    seed = _number("seed", raw.get("seed", 0), integer=True, nonneg=True)
    return RunConfig(
        name=name,
        dim=dim,
        resolution=resolution,
        mu=_family("mu", raw.get("mu"), MU_FAMILIES, "uniform"),
        f=_family("f", raw.get("f"), F_FAMILIES, "log"),
        phi=_family("phi", raw.get("phi"), PHI_FAMILIES, "zero"),
        V=_family("V", raw.get("V"), V_FAMILIES, "zero"),
        solver=solver,
        analysis=analysis,
        output=output,
        seed=seed,
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"malformed JSON: {exc}") from exc
    return validate_config(raw)


def _source_density(grid, params):
    if params["family"] == "uniform":
        return DiscreteMeasure.uniform(grid)
    pole = params.get("pole")
    ambient = grid.dim + 1
    p = np.eye(ambient)[-1] if pole is None else np.asarray(pole, dtype=float)
    if p.shape != (ambient,):
        raise ConfigError("mu.pole", f"expected {ambient} coordinates")
    p = p / np.linalg.norm(p)
    return DiscreteMeasure.normalized(grid, np.exp(params["kappa"] * (grid.nodes @ p)))


def build_scenario(config: RunConfig) -> Scenario:
    grid = build_grid(config.dim, config.resolution)
    s = config.solver
    solver = SolverSettings(
        eps_schedule=default_eps_schedule(s["eps_start"], s["eps_min"], s["eps_factor"]),
        tau=s["tau"], tol_fixed=s["tol_fixed"], max_iter=s["max_iter"],
        sinkhorn_tol=s["sinkhorn_tol"], sinkhorn_max_iter=s["sinkhorn_max_iter"],
        continuation_steps=s["continuation_steps"])
    f = CongestionFn(**config.f)
    phi = InteractionKernel(**config.phi)
    V = Potential(**{k: (tuple(v) if k == "pole" and v is not None else v) for k, v in config.V.items()})
    if V.pole is not None and len(V.pole) != grid.dim + 1:
        raise ConfigError("V.pole", f"expected {grid.dim + 1} coordinates")
    return Scenario(grid, _source_density(grid, config.mu), f, phi, V, solver, name=config.name)


def scenario_suite() -> list[RunConfig]:
    """Built-in scenarios covering both spheres, both congestion families,
    several interaction strengths and a continuation-vs-direct pair."""
    s2_solver = {"eps_min": 1e-2}
    vm = {"family": "von-mises", "kappa": 0.5}
    raw = [
        {"name": "uniform-s1", "dim": 1, "resolution": 64, "f": "log"},
        {"name": "uniform-s2", "dim": 2, "resolution": 2, "f": "log"},
        {"name": "potential-s1", "dim": 1, "resolution": 64, "f": "log",
         "V": {"family": "linear", "a": 0.2}},
        {"name": "potential-s2", "dim": 2, "resolution": 2, "f": "log", "mu": vm,
         "V": {"family": "linear", "a": 0.2}, "solver": s2_solver},
        {"name": "interaction-margin-0.9", "dim": 1, "resolution": 64, "f": "log", "mu": vm,
         "phi": {"family": "gaussian", "a": 0.1, "sigma": 0.5}},
        {"name": "interaction-margin-0.5", "dim": 1, "resolution": 64, "f": "log", "mu": vm,
         "phi": {"family": "gaussian", "a": 0.5, "sigma": 0.5}},
        {"name": "interaction-margin-0.1", "dim": 1, "resolution": 64, "f": "log", "mu": vm,
         "phi": {"family": "gaussian", "a": 0.9, "sigma": 0.5}},
        {"name": "interaction-s2-margin-0.5", "dim": 2, "resolution": 2, "f": "log", "mu": vm,
         "phi": {"family": "cosine", "a": 0.5}, "solver": s2_solver},
        {"name": "condition-violated", "dim": 1, "resolution": 64, "f": "log", "mu": vm,
         "phi": {"family": "gaussian", "a": 1.5, "sigma": 0.5}},
        {"name": "log-linear", "dim": 1, "resolution": 64, "mu": vm,
         "f": {"family": "log-linear", "alpha": 1.0, "beta": 0.5},
         "V": {"family": "linear", "a": 0.2}, "phi": {"family": "cosine", "a": 0.3}},
        {"name": "continuation-direct", "dim": 1, "resolution": 64, "f": "log", "mu": vm,
         "V": {"family": "linear", "a": 0.3}, "phi": {"family": "gaussian", "a": 0.5, "sigma": 0.7}},
        {"name": "continuation-5", "dim": 1, "resolution": 64, "f": "log", "mu": vm,
         "V": {"family": "linear", "a": 0.3}, "phi": {"family": "gaussian", "a": 0.5, "sigma": 0.7},
         "solver": {"continuation_steps": 5}},
    ]
    return [validate_config(r) for r in raw]
