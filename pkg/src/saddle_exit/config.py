"""JSON experiment configuration with a strict schema.

Example::

    {
      "model": {"name": "cubic-saddle", "params": {"coupling": 1.0}},
      "domain": {"kind": "ball", "radius": 0.5},
      "x0": [0.0, 0.0],
      "eps_list": [1e-2, 1e-3, 1e-4],
      "n": 2000,
      "seed": 1
    }

Custom models replace ``name``/``params`` by ``{"polynomial": {"dim": d,
"components": [...]}}`` (see :mod:`saddle_exit.models`). Level-set domains
give ``g`` as a list of monomials, ``{"kind": "level-set", "terms": [...]}``.
If the fixed point is not the origin, give a ``fixed_point`` guess; the
experiment then runs in coordinates centered at the refined fixed point.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .dynsys import Ball, Box, Domain, LevelSet, VectorFieldModel, find_fixed_point
from .errors import ConfigError
from .models import REGISTRY, PolynomialField, Polynomial, build_model, make_field

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_TERM = {
    "type": "object",
    "properties": {"coef": {"type": "number"},
                   "powers": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
    "required": ["coef", "powers"],
    "additionalProperties": False,
}
_BALL = {"properties": {"kind": {"const": "ball"},
                        "radius": {"type": "number", "exclusiveMinimum": 0}, "center": _NUM_LIST},
         "required": ["kind", "radius"], "additionalProperties": False}
_BOX = {"properties": {"kind": {"const": "box"}, "lower": _NUM_LIST, "upper": _NUM_LIST},
        "required": ["kind", "lower", "upper"], "additionalProperties": False}
_LEVEL = {"properties": {"kind": {"const": "level-set"}, "terms": {"type": "array", "items": _TERM},
                         "diameter": {"type": "number", "exclusiveMinimum": 0}},
          "required": ["kind", "terms"], "additionalProperties": False}
# "kind" selects the branch so that errors name fields of the intended shape
_DOMAIN = {
    "type": "object",
    "properties": {"kind": {"enum": ["ball", "box", "level-set"]}},
    "required": ["kind"],
    "allOf": [
        {"if": {"properties": {"kind": {"const": k}}, "required": ["kind"]}, "then": branch}
        for k, branch in (("ball", _BALL), ("box", _BOX), ("level-set", _LEVEL))
    ],
}
_NAMED_MODEL = {"properties": {"name": {"enum": sorted(REGISTRY)}, "params": {"type": "object"}},
                "required": ["name"], "additionalProperties": False}
_POLY_MODEL = {
    "properties": {"polynomial": {
        "type": "object",
        "properties": {"dim": {"type": "integer", "minimum": 1},
                       "components": {"type": "array", "items": {"type": "array", "items": _TERM}}},
        "required": ["dim", "components"], "additionalProperties": False}},
    "required": ["polynomial"], "additionalProperties": False,
}
SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"type": "object", "if": {"required": ["polynomial"]},
                  "then": _POLY_MODEL, "else": _NAMED_MODEL},
        "domain": _DOMAIN,
        "enclosure": _DOMAIN,
        "fixed_point": _NUM_LIST,
        "x0": _NUM_LIST,
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "eps_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "n": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "step": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "t_cap": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "samples_file": {"type": "string"},
        "tolerances": {
            "type": "object",
            "properties": {
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "delta0": {"type": "number", "exclusiveMinimum": 0},
                "K": {"type": "integer", "minimum": 2},
                "tol_exit": {"type": "number", "exclusiveMinimum": 0},
                "sigma_rtol": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "required": ["model", "domain"],
    "additionalProperties": False,
}

DEFAULT_TOLERANCES = {"rtol": 1e-9, "delta0": 1e-2, "K": 6, "tol_exit": 1e-10, "sigma_rtol": 1e-8}


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` holds the parsed JSON object."""

    raw: dict
    tolerances: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def n(self) -> int:
        return int(self.raw.get("n", 1000))

    @property
    def eps_list(self) -> list:
        if "eps_list" in self.raw:
            return [float(e) for e in self.raw["eps_list"]]
        return [float(self.raw.get("eps", 1e-4))]

    @property
    def eps(self) -> float:
        return float(self.raw["eps"]) if "eps" in self.raw else self.eps_list[-1]

    @property
    def step(self):
        return self.raw.get("step")

    @property
    def t_cap(self):
        return self.raw.get("t_cap")

    @property
    def threads(self) -> int:
        return int(self.raw.get("threads", 1))

    @property
    def output_dir(self) -> str:
        return self.raw.get("output_dir", "out")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw.update({k: v for k, v in kw.items() if v is not None})
        return parse_config(raw)

    def to_json(self) -> str:
        return dump_config(self)


def _field_error(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{path}: {err.message}"


def parse_config(obj) -> ExperimentConfig:
    """Validate a JSON string or an already-decoded object."""
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_field_error(e) for e in errors))
    if "eps_list" in obj:
        eps = obj["eps_list"]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_list: values must be strictly decreasing")
    tol = {**DEFAULT_TOLERANCES, **obj.get("tolerances", {})}
    cfg = ExperimentConfig(copy.deepcopy(obj), tol)
    _check_dimensions(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n"


def _model_dim(spec) -> int:
    if "polynomial" in spec:
        return int(spec["polynomial"]["dim"])
    return make_field(spec["name"], spec.get("params")).dim


def _check_dimensions(cfg):
    d = _model_dim(cfg.raw["model"])
    for key in ("x0", "fixed_point"):
        if key in cfg.raw and len(cfg.raw[key]) != d:
            raise ConfigError(f"{key}: expected {d} coordinates, got {len(cfg.raw[key])}")
    for key in ("domain", "enclosure"):
        spec = cfg.raw.get(key)
        if spec is None:
            continue
        for sub in ("center", "lower", "upper"):
            if sub in spec and len(spec[sub]) != d:
                raise ConfigError(f"{key}.{sub}: expected {d} coordinates, got {len(spec[sub])}")
        if spec["kind"] == "box" and not np.all(np.array(spec["lower"]) < np.array(spec["upper"])):
            raise ConfigError(f"{key}: lower must be below upper in every coordinate")
        if spec["kind"] == "level-set":
            Polynomial(spec["terms"], d)


def build_domain(spec: dict, dim: int) -> Domain:
    kind = spec["kind"]
    if kind == "ball":
        return Ball(spec["radius"], spec.get("center"), dim=dim)
    if kind == "box":
        return Box(spec["lower"], spec["upper"])
    poly = Polynomial(spec["terms"], dim)
    return LevelSet(poly, dim, spec.get("diameter"))


@dataclass
class Experiment:
    """A config resolved into a model centered at its fixed point.

    ``offset`` is the fixed point in the config's coordinates; ``x0`` is
    already shifted.
    """

    config: ExperimentConfig
    model: VectorFieldModel
    x0: np.ndarray
    offset: np.ndarray
    registry_name: str | None
    params: dict | None


def resolve(cfg: ExperimentConfig) -> Experiment:
    spec = cfg.raw["model"]
    if "polynomial" in spec:
        fld = PolynomialField.from_table(spec["polynomial"])
        name, params = "custom", None
    else:
        fld = make_field(spec["name"], spec.get("params"))
        name, params = spec["name"], spec.get("params")
    d = fld.dim
    domain = build_domain(cfg.raw["domain"], d)
    enclosure = build_domain(cfg.raw["enclosure"], d) if "enclosure" in cfg.raw else None
    model = build_model(fld, domain, enclosure, name)
    x0 = np.array(cfg.raw.get("x0", np.zeros(d)), dtype=float)
    offset = np.zeros(d)
    if "fixed_point" in cfg.raw or np.linalg.norm(model.b(np.zeros(d))) > 1e-12:
        guess = cfg.raw.get("fixed_point", np.zeros(d))
        offset = find_fixed_point(model, guess)
        if np.any(offset != 0):
            model = model.shifted(offset)
            x0 = x0 - offset
    if model.domain.g(x0) >= 0:
        raise ConfigError(f"x0: point {cfg.raw.get('x0')} is not inside the domain")
    return Experiment(cfg, model, x0, offset, None if name == "custom" else name, params)
