"""Experiment configuration: JSON schema, parsing and emission."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np

from .nonlin import CubicNonlinearity, load_nonlinearity
from .spectral import Grid1D, SolverConfig, gaussian


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2 on the command line)."""


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["nonlinearity", "initial_data"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "nonlinearity": {"oneOf": [
            {"type": "string", "minLength": 1},
            {"type": "object", "required": ["n", "terms"]},
        ]},
        "initial_data": {
            "type": "array", "minItems": 1,
            "items": {"oneOf": [
                {
                    "type": "object", "additionalProperties": False,
                    "required": ["type"],
                    "properties": {
                        "type": {"const": "gaussian"},
                        "amplitude": _NUM, "center": _NUM, "width": _POS, "shift": _NUM,
                    },
                },
                {
                    "type": "object", "additionalProperties": False,
                    "required": ["type", "path"],
                    "properties": {"type": {"const": "file"}, "path": {"type": "string"}},
                },
            ]},
        },
        "epsilon": _POS,
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {"L": _POS, "M": {"type": "integer", "minimum": 8}},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "t_end": _POS, "dt0": _POS,
                "fixed_dt": {"oneOf": [_POS, {"type": "null"}]},
                "dt_max": {"oneOf": [_POS, {"type": "null"}]},
                "per_decade": {"type": "integer", "minimum": 0},
                "t_first": _POS,
                "extra_times": {"type": "array", "items": _POS},
                "similarity": {"oneOf": [{"enum": ["auto", "off"]}, _POS]},
            },
        },
        "analysis": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "classify": {"type": "boolean"},
                "lifespan": {"type": "boolean"},
                "fit": {"type": "boolean"},
                "fit_window": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
                "m_estimate": {"type": "boolean"},
                "decoupling": {"type": "boolean"},
                "epsilon_sweep": {"oneOf": [
                    {"type": "array", "items": _POS, "minItems": 2}, {"type": "null"}]},
                "hermitian_level": {"enum": ["b0", "b1", "b2", "b3"]},
                "xi_samples": {"type": "integer", "minimum": 3},
                "y_samples": {"type": "integer", "minimum": 1},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


@dataclass
class AnalysisRequest:
    classify: bool = True
    lifespan: bool = True
    fit: bool = True
    fit_window: tuple = (1e2, 1e4)
    m_estimate: bool = True
    decoupling: bool = True
    epsilon_sweep: Optional[tuple] = None
    hermitian_level: str = "b0"
    xi_samples: int = 64
    y_samples: int = 4096


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``nonlinearity`` is a catalog name or the canonical JSON of an inline
    nonlinearity, so emitting and re-parsing gives back an equal object.
    """

    nonlinearity: Union[str, dict]
    initial_data: list
    epsilon: float = 0.3
    grid: dict = field(default_factory=lambda: {"L": 60.0, "M": 2048})
    solver: dict = field(default_factory=dict)
    analysis: AnalysisRequest = field(default_factory=AnalysisRequest)
    seed: int = 0
    name: str = "run"
    base_dir: Optional[str] = field(default=None, compare=False)

    def resolve_nonlinearity(self) -> CubicNonlinearity:
        return load_nonlinearity(self.nonlinearity)

    def make_grid(self) -> Grid1D:
        return Grid1D(L=float(self.grid["L"]), M=int(self.grid["M"]))

    def make_solver(self) -> SolverConfig:
        kw = dict(self.solver)
        if kw.get("dt_max") is None:
            kw.pop("dt_max", None)
        if "extra_times" in kw:
            kw["extra_times"] = tuple(kw["extra_times"])
        return SolverConfig(**kw)

    def profile_data(self, grid: Grid1D) -> np.ndarray:
        """Unscaled initial data ``psi``, shape ``(n, M)``."""
        rows = []
        for item in self.initial_data:
            if item["type"] == "gaussian":
                rows.append(gaussian(grid.x, **{k: v for k, v in item.items() if k != "type"}))
            else:
                path = Path(item["path"])
                if not path.is_absolute() and self.base_dir:
                    path = Path(self.base_dir) / path
                arr = np.load(path)
                if arr.shape != (grid.M,):
                    raise ConfigError(f"{path}: expected shape ({grid.M},), got {arr.shape}")
                rows.append(arr.astype(np.complex128))
        return np.stack(rows)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "nonlinearity": self.nonlinearity,
            "initial_data": [dict(d) for d in self.initial_data],
            "epsilon": self.epsilon,
            "grid": dict(self.grid),
            "solver": dict(self.solver),
            "analysis": asdict(self.analysis),
            "seed": self.seed,
        }
        a = out["analysis"]
        a["fit_window"] = list(a["fit_window"])
        if a["epsilon_sweep"] is not None:
            a["epsilon_sweep"] = list(a["epsilon_sweep"])
        return out


def _floats(obj):
    # config numbers are parsed as Fractions so inline coefficients stay exact
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_floats(v) for v in obj]
    return obj


def parse_config(obj: dict, base_dir=None) -> ExperimentConfig:
    """Validate a decoded JSON object and build the config.

    Raises :class:`ConfigError` naming the violated constraint.
    """
    try:
        jsonschema.validate(obj, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    nl = obj["nonlinearity"]
    try:
        N = load_nonlinearity(nl)
    except ValueError as exc:
        raise ConfigError(f"nonlinearity: {exc}") from None
    if not isinstance(nl, str):
        nl = N.to_json()
    if len(obj["initial_data"]) != N.n:
        raise ConfigError(
            f"initial_data has {len(obj['initial_data'])} components, nonlinearity has {N.n}")
    rest = _floats({k: v for k, v in obj.items() if k != "nonlinearity"})
    analysis = dict(rest.get("analysis", {}))
    if "fit_window" in analysis:
        analysis["fit_window"] = tuple(analysis["fit_window"])
        lo, hi = analysis["fit_window"]
        if not lo < hi:
            raise ConfigError("analysis.fit_window must be increasing")
    if analysis.get("epsilon_sweep") is not None:
        analysis["epsilon_sweep"] = tuple(analysis["epsilon_sweep"])
    solver = rest.get("solver", {})
    if "per_decade" in solver:
        solver["per_decade"] = int(solver["per_decade"])
    grid = {"L": 60.0, "M": 2048}
    grid.update(rest.get("grid", {}))
    grid["M"] = int(grid["M"])
    cfg = ExperimentConfig(
        nonlinearity=nl, initial_data=rest["initial_data"],
        epsilon=rest.get("epsilon", 0.3), grid=grid, solver=solver,
        analysis=AnalysisRequest(**analysis), seed=int(rest.get("seed", 0)),
        name=rest.get("name", "run"),
        base_dir=None if base_dir is None else str(base_dir),
    )
    try:
        cfg.make_solver()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None
    if math.isinf(cfg.epsilon):
        raise ConfigError("epsilon must be finite")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read a config file, or the config recorded in a run manifest."""
    path = Path(path)
    try:
        with open(path) as fh:
            obj = json.load(fh, parse_float=Fraction)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if isinstance(obj, dict) and "config" in obj and "environment" in obj:
        obj = obj["config"]   # a run manifest
    return parse_config(obj, base_dir=path.parent)


def emit_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_json(), indent=2, sort_keys=True)
