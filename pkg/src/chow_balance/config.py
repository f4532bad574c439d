"""Experiment configuration files.

Configs are JSON. Unknown fields are rejected so that a typo cannot silently
change what gets verified. A variety description may be given inline, as a
path, or as the whole file (top-level ``"kind"``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedded_variety import LatticePolytope, MonomialEmbedding, PointConfiguration, build_grid
from .solvers import SolverOptions
from .torus_action import TorusData, build_torus, torus_from_matrix

TASKS = ("volume-check", "moment", "optimal-weight", "balance", "verify")
MODES = ("absolute", "relative", "sigma")
TARGETS = ("equivalence", "character", "t-sigma", "orbit-constancy")

VARIETY_FIELDS = {"kind", "polytope_vertices", "coefficients", "degree", "points",
                  "torus_rank", "weight_matrix", "weights"}
GRID_FIELDS = {"radial", "angular", "remap"}
SOLVER_FIELDS = {"max_iter", "tol", "damping", "line_search", "refinement"}
CONFIG_FIELDS = {"variety", "grid", "solver", "task", "mode", "target", "start", "output",
                 "seed", "deterministic"}

DEFAULT_GRID = {"radial": 64, "angular": 64, "remap": 1.0}
OUTPUT_ENV = "CHOW_BALANCE_OUT"


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending field."""


def _unknown(section, allowed, where):
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _complex(x, where):
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"{where}: complex entries are [re, im]")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float)):
        return complex(x)
    raise ConfigError(f"{where}: expected a number or [re, im]")


def parse_matrix(rows, where) -> np.ndarray:
    try:
        return np.array([[_complex(x, f"{where}[{i}][{j}]") for j, x in enumerate(row)]
                         for i, row in enumerate(rows)], dtype=complex)
    except TypeError as exc:
        raise ConfigError(f"{where}: expected a list of rows") from exc


def build_variety(desc: dict):
    """Return ``(variety, torus)`` from a variety description."""
    _unknown(desc, VARIETY_FIELDS, "variety")
    kind = desc.get("kind")
    if kind == "toric":
        if "polytope_vertices" not in desc:
            raise ConfigError("variety.polytope_vertices: required for kind 'toric'")
        try:
            poly = LatticePolytope(desc["polytope_vertices"])
            var = MonomialEmbedding.from_polytope(poly, desc.get("coefficients"), desc.get("degree"))
        except ValueError as exc:
            raise ConfigError(f"variety: {exc}") from exc
        if "weights" in desc:
            td = _explicit_weights(desc["weights"], var.dim)
        else:
            A = desc.get("weight_matrix", np.eye(var.n, dtype=int).tolist())
            A = np.atleast_2d(np.asarray(A))
            if A.shape[1] != var.n:
                raise ConfigError(f"variety.weight_matrix: needs {var.n} columns")
            if "torus_rank" in desc and desc["torus_rank"] != A.shape[0]:
                raise ConfigError("variety.torus_rank: does not match weight_matrix rows")
            td = torus_from_matrix(A, var.alphas)
    elif kind == "points":
        for key in ("polytope_vertices", "coefficients", "weight_matrix"):
            if key in desc:
                raise ConfigError(f"variety.{key}: not allowed for kind 'points'")
        if "points" not in desc:
            raise ConfigError("variety.points: required for kind 'points'")
        pts = parse_matrix(desc["points"], "variety.points")
        try:
            var = PointConfiguration(pts)
        except ValueError as exc:
            raise ConfigError(f"variety.points: {exc}") from exc
        if "degree" in desc and desc["degree"] != var.degree:
            raise ConfigError("variety.degree: does not match the number of points")
        td = _explicit_weights(desc.get("weights", [0] * var.dim), var.dim)
        if "torus_rank" in desc and desc["torus_rank"] != td.rank:
            raise ConfigError("variety.torus_rank: does not match weights")
    else:
        raise ConfigError("variety.kind: must be 'toric' or 'points'")
    return var, td


def _explicit_weights(weights, dim) -> TorusData:
    if len(weights) != dim:
        raise ConfigError(f"variety.weights: need {dim} entries")
    try:
        return build_torus(weights)
    except ValueError as exc:
        raise ConfigError(f"variety.weights: {exc}") from exc


@dataclass
class ExperimentConfig:
    variety: dict
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    solver: SolverOptions = field(default_factory=SolverOptions)
    task: str = "volume-check"
    mode: str | None = None
    target: str | None = None
    start: list | None = None
    output: str | None = None
    seed: int = 0
    deterministic: bool = True

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task: must be one of {', '.join(TASKS)}")
        if self.task == "balance" and self.mode not in MODES:
            raise ConfigError(f"mode: balance needs one of {', '.join(MODES)}")
        if self.task == "verify" and self.target not in TARGETS:
            raise ConfigError(f"target: verify needs one of {', '.join(TARGETS)}")
        _unknown(self.grid, GRID_FIELDS, "grid")
        for key in ("radial", "angular"):
            if int(self.grid.get(key, 2)) < 2:
                raise ConfigError(f"grid.{key}: must be >= 2")
        if float(self.grid.get("remap", 1.0)) <= 0:
            raise ConfigError("grid.remap: must be positive")
        var, td = build_variety(self.variety)
        if self.task == "verify" and self.target == "character" and var.n != 0:
            raise ConfigError("target: character identity is exact only for kind 'points'")
        if self.start is not None:
            g = parse_matrix(self.start, "start")
            if g.shape != (var.dim, var.dim):
                raise ConfigError(f"start: must be {var.dim}x{var.dim}")
        return self

    def build(self):
        var, td = build_variety(self.variety)
        grid = None
        if var.n > 0:
            grid = build_grid(var.n, int(self.grid["radial"]), int(self.grid["angular"]),
                              float(self.grid.get("remap", 1.0)))
        start = None if self.start is None else parse_matrix(self.start, "start")
        return var, td, grid, start

    def to_dict(self) -> dict:
        s = self.solver
        return {
            "variety": self.variety,
            "grid": self.grid,
            "solver": {"max_iter": s.max_iter, "tol": s.tol, "damping": s.damping,
                       "line_search": s.line_search, "refinement": [list(r) for r in s.refinement]},
            "task": self.task, "mode": self.mode, "target": self.target,
            "start": self.start, "seed": self.seed, "deterministic": self.deterministic,
        }


def load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    if "kind" in raw:
        raw = {"variety": raw}
    _unknown(raw, CONFIG_FIELDS, "config")
    variety = raw.get("variety")
    if isinstance(variety, str):
        path = Path(variety)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        variety = load_json(path)
    if not isinstance(variety, dict):
        raise ConfigError("variety: required (object or path)")
    grid = dict(DEFAULT_GRID)
    grid.update(raw.get("grid", {}))
    solver_raw = raw.get("solver", {})
    _unknown(solver_raw, SOLVER_FIELDS, "solver")
    try:
        solver = SolverOptions(**{**solver_raw, "refinement": tuple(tuple(r) for r in solver_raw.get("refinement", ()))})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc
    return ExperimentConfig(
        variety=variety, grid=grid, solver=solver,
        task=raw.get("task", "volume-check"), mode=raw.get("mode"), target=raw.get("target"),
        start=raw.get("start"), output=raw.get("output"), seed=int(raw.get("seed", 0)),
        deterministic=bool(raw.get("deterministic", True)),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return from_dict(load_json(path), path.parent)


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "chow-balance-out")
