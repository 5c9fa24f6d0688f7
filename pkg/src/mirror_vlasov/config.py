"""JSON run configuration: parsing, defaults and validation."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Optional

from .coulomb import FieldConfig
from .dynamics import StepConfig
from .geometry import Geometry
from .initial_data import InitialDataParams


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "geometry": {"A": 1.0, "A_bar": 0.6, "theta": 3.0, "L": 16.0, "M": 16},
    "initial_data": {"C0": 1.0, "lambda": 1.0, "C1": 1.0, "alpha": 0.7,
                     "N_cutoff": None, "n_per_slab": 64, "seed": 0},
    "field": {"softening": None, "near_radius": 2.0, "method": "hybrid"},
    "stepping": {"dt": 1e-3, "t_end": 10.0, "record_every": 100,
                 "max_speed_floor": 1.0, "electric": True, "magnetic": True},
    "diagnostics": {"mu_spacing": 0.5, "cell_size": 0.25,
                    "R_list": [4, 8, 16, 32, 64], "average_windows": [[0.0, 1.0]]},
    "output_dir": "out",
}


@dataclass
class DiagnosticsConfig:
    mu_spacing: float = 0.5
    cell_size: float = 0.25
    R_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    average_windows: list = field(default_factory=lambda: [[0.0, 1.0]])

    def __post_init__(self):
        if not self.mu_spacing > 0:
            raise ValueError("mu_spacing must be positive")
        if self.mu_spacing > 0.5:
            raise ValueError("mu_spacing must not exceed R/2 for R >= 1, i.e. 0.5")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if any(not r > 0 for r in self.R_list):
            raise ValueError("R_list entries must be positive")
        for w in self.average_windows:
            if len(w) != 2 or not w[1] > 0:
                raise ValueError("average_windows entries must be [t, delta] with delta > 0")


@dataclass
class RunConfig:
    geometry: Geometry
    initial: InitialDataParams
    n_per_slab: int
    seed: int
    field: FieldConfig
    stepping: StepConfig
    diagnostics: DiagnosticsConfig
    output_dir: str
    raw: dict

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def _merge(defaults, given, path=""):
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key '{here}'")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = value
    return out


def _build(block, ctor, prefix, **kw):
    try:
        return ctor(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix}: {exc}") from None


def from_dict(data: dict) -> RunConfig:
    raw = _merge(DEFAULTS, data)
    g, i, f, s, d = (raw[k] for k in ("geometry", "initial_data", "field",
                                      "stepping", "diagnostics"))
    geometry = _build(g, Geometry, "geometry", **g)
    initial = _build(i, InitialDataParams, "initial_data", C0=i["C0"], lam=i["lambda"],
                     C1=i["C1"], alpha=i["alpha"], N_cutoff=i["N_cutoff"])
    n_per_slab = i["n_per_slab"]
    if not isinstance(n_per_slab, int) or n_per_slab < 1:
        raise ConfigError("initial_data.n_per_slab: must be an integer >= 1")
    if not isinstance(i["seed"], int) or i["seed"] < 0:
        raise ConfigError("initial_data.seed: must be a non-negative integer")
    fieldc = _build(f, FieldConfig, "field", **f)
    stepping = _build(s, StepConfig, "stepping", **s)
    diag = _build(d, DiagnosticsConfig, "diagnostics", **d)
    if not isinstance(raw["output_dir"], str):
        raise ConfigError("output_dir: must be a string")
    return RunConfig(geometry, initial, n_per_slab, i["seed"], fieldc, stepping, diag,
                     raw["output_dir"], raw)


def parse_config(text: str, overrides: Optional[list] = None) -> RunConfig:
    """Parse a JSON document, apply ``key.path=value`` overrides, validate."""
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    for item in overrides or ():
        set_key(data, item)
    return from_dict(data)


def set_key(data: dict, item: str):
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, value = item.split("=", 1)
    try:
        value = json.loads(value)
    except json.JSONDecodeError:
        pass
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{key}' descends into a scalar")
    node[parts[-1]] = value
