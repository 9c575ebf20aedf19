"""Scenario documents (YAML or JSON): schema, presets and conversion to Scenario."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from . import fcrd
from . import hydro as hy
from . import turbine as wt
from .gridsim import Bus, Disturbance, Scenario
from .lti import RationalTF
from .matching import synthesize

PRESETS = ("n5_hydro_only", "n5_wind_hydro", "n5_sensitivity_50pct", "n5_no_fault",
           "dvpp_step", "turbine_step", "fcrd_aggregate")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_frac = {"type": "number", "minimum": 0, "maximum": 1}
_root = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}

_TARGET = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["fcrd", "fcrd_first_order", "tf"]},
        "r_fcr": _pos, "lead": _pos, "lag1": _pos, "lag2": _pos,
        "gain": _num,
        "zeros": {"type": "array", "items": _root},
        "poles": {"type": "array", "items": _root},
    },
}

_HYDRO = {
    "type": "object",
    "additionalProperties": False,
    "required": ["T_w"],
    "properties": {
        "rating": _pos, "p_gen": _pos, "T_y": _pos, "T_w": _pos,
        "g0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "servo_rate_limit": _pos, "fcr_share": _frac,
    },
    "oneOf": [{"required": ["rating"]}, {"required": ["p_gen"]}],
}

_WIND = {
    "type": "object",
    "additionalProperties": False,
    "required": ["p_nom", "v"],
    "properties": {
        "p_nom": _pos, "v": _pos, "ffr_share": _frac, "k": _pos,
        "x_floor": _pos, "protection": {"type": "boolean"},
    },
}

_BUS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["id"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "w_kin": {"type": "number", "minimum": 0},
        "hydro": _HYDRO,
        "wind": _WIND,
    },
}

_COMMON = {
    "name": {"type": "string"},
    "experiment": {"enum": ["grid", "turbine_step"]},
    "description": {"type": "string"},
    "t_end": _pos,
    "dt": _pos,
}

GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["target", "buses"],
    "properties": {
        **_COMMON,
        "mode": {"enum": ["closed_loop", "open_loop"]},
        "ideal": {"type": "boolean"},
        "f0": _pos,
        "f_ref": _pos,
        "load_damping": {"type": "number", "minimum": 0},
        "target": _TARGET,
        "disturbance": {
            "type": "object", "additionalProperties": False,
            "properties": {"t": {"type": "number", "minimum": 0}, "dP": _num},
        },
        "buses": {"type": "array", "items": _BUS},
        "pole_override": {"type": "object", "additionalProperties": {"type": "array", "items": _root}},
    },
}

TURBINE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "turbine"],
    "properties": {
        **_COMMON,
        "turbine": {
            "type": "object",
            "additionalProperties": False,
            "required": ["speeds", "steps"],
            "properties": {
                "speeds": {"type": "array", "items": _pos, "minItems": 1},
                "steps": {"type": "array", "items": _num, "minItems": 1},
                "k": _pos,
                "t_step": {"type": "number", "minimum": 0},
                "protection": {"type": "boolean"},
                "wind_trace": {"type": "string"},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario document; the message names the offending field."""


@dataclass
class TurbineStepExperiment:
    name: str
    speeds: list[float]
    steps: list[float]
    params: wt.TurbineParams
    t_end: float = 150.0
    dt: float = 0.01
    t_step: float = 1.0
    wind_trace: str | None = None


@dataclass
class GridExperiment:
    scenario: Scenario
    ideal: bool = False


def _field(path) -> str:
    return "/".join(str(p) for p in path) or "<root>"


def validate(doc: Any) -> None:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    schema = TURBINE_SCHEMA if doc.get("experiment") == "turbine_step" else GRID_SCHEMA
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        raise ScenarioError("; ".join(f"field {_field(e.path)}: {e.message}" for e in errors))


def load_document(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    validate(doc)
    return doc


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("ffrcoord").joinpath("presets", f"{name}.yaml").read_text()
    doc = yaml.safe_load(text)
    validate(doc)
    return doc


def _root_value(r) -> complex:
    return complex(r[0], r[1]) if isinstance(r, list) else complex(r)


def _with_conjugates(roots) -> list[complex]:
    out = []
    for r in map(_root_value, roots):
        out.append(r)
        if r.imag != 0:
            out.append(r.conjugate())
    return out


def build_target(t: dict) -> RationalTF:
    if t["kind"] == "tf":
        return RationalTF(t.get("gain", 1.0), _with_conjugates(t.get("zeros", [])),
                          _with_conjugates(t.get("poles", [])))
    spec = fcrd.FcrdSpec(**{k: t[k] for k in ("r_fcr", "lead", "lag1", "lag2") if k in t})
    if t["kind"] == "fcrd_first_order":
        f = fcrd.derive_first_order_target(spec)
        return f["f_temp"] if spec.r_fcr is None else spec.r_fcr * RationalTF.lag(f["T_temp"])
    return fcrd.design_target(spec)


def _bus(b: dict) -> Bus:
    kw: dict = {}
    if "hydro" in b:
        h = b["hydro"]
        g0 = h.get("g0", 0.8)
        rating = h["rating"] if "rating" in h else h["p_gen"] / g0
        kw.update(hydro=hy.HydroParams(rating, h.get("T_y", 0.2), h["T_w"], g0,
                                       h.get("servo_rate_limit", 0.1)),
                  fcr_share=h.get("fcr_share", 1.0))
    if "wind" in b:
        w = b["wind"]
        extra = {k: w[k] for k in ("k", "x_floor", "protection") if k in w}
        kw.update(wind=wt.TurbineParams.farm(w["p_nom"], **extra), wind_speed=w["v"],
                  ffr_share=w.get("ffr_share", 1.0))
    return Bus(b["id"], b.get("w_kin", 0.0), **kw)


def build(doc: dict) -> GridExperiment | TurbineStepExperiment:
    """Validated document -> runnable experiment (controllers synthesized)."""
    validate(doc)
    name = doc.get("name", "scenario")
    if doc.get("experiment") == "turbine_step":
        t = doc["turbine"]
        extra = {k: t[k] for k in ("k", "protection") if k in t}
        return TurbineStepExperiment(name, list(t["speeds"]), list(t["steps"]), wt.TurbineParams(**extra),
                                     doc.get("t_end", 150.0), doc.get("dt", 0.01), t.get("t_step", 1.0),
                                     t.get("wind_trace"))
    dist = doc.get("disturbance", {})
    try:
        sc = Scenario(
            buses=[_bus(b) for b in doc["buses"]],
            target=build_target(doc["target"]),
            f0=doc.get("f0", 50.0),
            f_ref=doc.get("f_ref"),
            load_damping=doc.get("load_damping", 400.0),
            disturbance=Disturbance(dist.get("t", 1.0), dist.get("dP", 1400.0)),
            t_end=doc.get("t_end", 120.0),
            dt=doc.get("dt", 0.01),
            mode=doc.get("mode", "closed_loop"),
            name=name,
        )
        ideal = doc.get("ideal", False)
        if not ideal and sc.actuators():
            override = {k: _with_conjugates(v) for k, v in doc.get("pole_override", {}).items()}
            sc.controllers = synthesize(sc.actuators(), sc.target, override)
        if not ideal:
            sc.validate()
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    return GridExperiment(sc, ideal)


def set_path(doc: dict, path: str, value: float) -> dict:
    """Copy of ``doc`` with the scalar at dotted ``path`` (list indices allowed) replaced."""
    out = copy.deepcopy(doc)
    keys = path.split(".")
    node: Any = out
    try:
        for k in keys[:-1]:
            node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
        last = int(keys[-1]) if isinstance(node, list) else keys[-1]
        old = node[last] if isinstance(node, list) else node.get(last, 0.0)
    except (IndexError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ScenarioError(f"field {path} does not exist") from exc
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ScenarioError(f"field {path} is not a scalar")
    node[last] = value
    validate(out)
    return out
