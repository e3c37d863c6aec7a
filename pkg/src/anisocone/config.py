"""Run configuration: JSON schema, defaults, and flag overrides.

Precedence is flags > config file > defaults.  Validation happens before any
computation; a ConfigError carries the diagnostics printed by the CLI.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import jsonschema

from .cones import ConeSpec, WeightSpec
from .norms import NormSpec


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n": {"type": "integer", "minimum": 2, "maximum": 16},
        "p": _NUM,
        "norm": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["euclidean", "quadratic", "blend", "shifted"]},
                "params": {"type": "object"},
                "n": {"type": "integer"},
            },
        },
        "cone": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["full_space", "half_space", "orthant", "circular", "product"]},
                "n": {"type": "integer"},
                "normal": {"type": "array", "items": _NUM},
                "m": {"type": "integer", "minimum": 1},
                "axis": {"type": "array", "items": _NUM},
                "half_aperture": _POS,
                "k": {"type": "integer", "minimum": 0},
                "tail": {"type": "object"},
            },
        },
        "weight": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["unit", "monomial"]},
                "exponents": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"r_min": _POS, "r_max": _POS, "ratio": {"type": "number", "exclusiveMinimum": 1}},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scale": _POS,
                "ellipticity_floor": _POS,
                "dual": _POS,
                "search_gap": _POS,
                "fit_linf": _POS,
            },
        },
        "samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                k: {"type": "integer", "minimum": 1}
                for k in ("norm", "residual", "boundary", "identity", "newton", "rigidity")
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iter": {"type": "integer", "minimum": 1},
                "time_limit": _POS,
                "width": _POS,
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "n": 3,
    "p": 2.0,
    "norm": {"family": "euclidean", "params": {}},
    "cone": {"kind": "full_space"},
    "weight": {"kind": "unit", "exponents": []},
    "grid": {"r_min": 1e-3, "r_max": 1e3, "ratio": 1.02},
    "tolerances": {"scale": 1.0, "ellipticity_floor": 1e-3, "dual": 1e-8, "search_gap": 5e-3,
                   "fit_linf": 0.02},
    "samples": {"norm": 1000, "residual": 200, "boundary": 100, "identity": 50, "newton": 10000,
                "rigidity": 100},
    "search": {"max_iter": 100000, "time_limit": 120.0, "width": 1.0},
    "seed": 0,
    "threads": 1,
    "out": "anisocone-out",
}

CONE_SHORTCUTS = ("full", "half", "circular", "orthant")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("norm", "cone"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def cone_from_shortcut(name: str, n: int) -> dict:
    if name == "full":
        return {"kind": "full_space"}
    if name == "half":
        return {"kind": "half_space"}
    if name == "circular":
        return {"kind": "circular", "half_aperture": math.pi / 4}
    if name == "orthant":
        return {"kind": "orthant", "m": n}
    raise ConfigError(f"unknown cone {name!r}; choose from {', '.join(CONE_SHORTCUTS)}")


@dataclass
class RunConfig:
    n: int
    p: float
    norm: NormSpec
    cone: ConeSpec
    weight: WeightSpec
    grid: dict
    tolerances: dict
    samples: dict
    search: dict
    seed: int
    threads: int
    out: str
    raw: dict

    @property
    def a(self) -> float:
        return self.weight.degree

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def build(config: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, a config mapping and flag overrides, then validate."""
    data = _merge(DEFAULTS, config or {})
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "cone" in ov and isinstance(ov["cone"], str):
        ov["cone"] = cone_from_shortcut(ov["cone"], int(ov.get("n", data["n"])))
    if "tol_scale" in ov:
        data["tolerances"]["scale"] = ov.pop("tol_scale")
    data = _merge(data, ov)
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(x) for x in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {e.message}") from None
    n, p = int(data["n"]), float(data["p"])
    if not (1 < p < n):
        raise ConfigError(f"require 1<p<n (got p={p:g}, n={n})")
    g = data["grid"]
    if g["r_min"] >= g["r_max"]:
        raise ConfigError("grid needs r_min < r_max")
    data["norm"] = dict(data["norm"], n=n)
    if data["cone"].get("kind") != "product":
        data["cone"] = dict(data["cone"], n=n)
    try:
        norm = NormSpec.from_dict(data["norm"])
        cone = ConeSpec.from_dict(data["cone"])
        weight = WeightSpec.from_dict(data["weight"])
        weight.check_cone(cone)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"config invalid: {e}") from None
    if cone.n != n:
        raise ConfigError("cone dimension differs from n")
    if p >= n + weight.degree:
        raise ConfigError("require p < n + a")
    return RunConfig(n, p, norm, cone, weight, dict(g), dict(data["tolerances"]), dict(data["samples"]),
                     dict(data["search"]), int(data["seed"]), int(data["threads"]), str(data["out"]), data)


def load(path: str | None, overrides: dict | None = None) -> RunConfig:
    cfg = {}
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    return build(cfg, overrides)
