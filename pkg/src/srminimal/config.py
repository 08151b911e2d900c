"""Run configuration: JSON schema validation, defaults and dataclasses."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .expr import ParseError, evaluate, parse_expression
from .presets import preset
from .structure import SRStructure

DEFAULT_H = 1e-3
DEFAULT_NS = 64
DEFAULT_NT = 200

_number = {"type": ["number", "string"]}  # strings are constant expressions like "2*pi"
_range = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}
_point = {"type": "array", "items": _number, "minItems": 1}
_box = {"type": "array", "items": _range, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "structure": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["preset"],
                    "properties": {
                        "preset": {"enum": ["heisenberg", "rototranslation"]},
                        "m": {"type": "integer", "minimum": 1},
                        "vertical": {"enum": [1, -1]},
                        "reference_point": _point,
                        "orientation": {"enum": ["auto", 1, -1]},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["chart", "frame"],
                    "properties": {
                        "chart": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                        "frame": {
                            "type": "array",
                            "minItems": 1,
                            "items": {"type": "array", "items": {"type": "string"}},
                        },
                        "reference_point": _point,
                        "orientation": {"enum": ["auto", 1, -1]},
                        "name": {"type": "string"},
                    },
                },
            ]
        },
        "surface": {
            "type": "object",
            "additionalProperties": False,
            "required": ["F"],
            "properties": {"F": {"type": "string"}, "level": _number},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["gamma", "phi0", "s_range", "t_range"],
            "properties": {
                "gamma": {"type": "array", "items": {"type": "string"}, "minItems": 3, "maxItems": 3},
                "phi0": {"type": "string"},
                "s_range": _range,
                "n_s": {"type": "integer", "minimum": 1},
                "t_range": _range,
                "n_t": {"type": "integer", "minimum": 1},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "box": _box,
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "required": ["box"],
            "properties": {
                "box": _box,
                "resolution": {"type": "integer", "minimum": 3},
                "loop_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "residual": {
            "type": "object",
            "additionalProperties": False,
            "required": ["box"],
            "properties": {
                "box": _box,
                "resolution": {"type": "integer", "minimum": 2},
                "min_d1": {"type": "number", "minimum": 0},
            },
        },
        "geodesic": {
            "type": "object",
            "additionalProperties": False,
            "required": ["q0", "psi", "t_range"],
            "properties": {
                "q0": _point,
                "psi": _number,
                "u3": _number,
                "t_range": _range,
                "h": {"type": "number", "exclusiveMinimum": 0},
                "box": _box,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "name": {"type": "string"}},
        },
        "seed": {"type": "integer"},
    },
}


def constant(value, where: str = "") -> float:
    """A number, or a constant expression string such as ``"2*pi"`` or ``"-3/2"``."""
    if isinstance(value, (int, float)):
        return float(value)
    try:
        v = evaluate(parse_expression(value, []), [])
    except ParseError as exc:
        raise ConfigError(f"bad constant expression: {exc}", where) from None
    except ArithmeticError as exc:
        raise ConfigError(f"cannot evaluate constant: {exc}", where) from None
    if not math.isfinite(v):
        raise ConfigError("constant is not finite", where)
    return v


def _pair(value, where):
    return tuple(constant(v, f"{where}/{i}") for i, v in enumerate(value))


def _box_of(value, where):
    return [_pair(r, f"{where}/{i}") for i, r in enumerate(value)] if value is not None else None


@dataclass
class StructureConfig:
    preset: str | None = None
    m: int = 1
    vertical: int = 1
    chart: list | None = None
    frame: list | None = None
    reference_point: list | None = None
    orientation: object = "auto"
    name: str | None = None

    def build(self) -> SRStructure:
        kw = {"orientation": self.orientation, "reference_point": self.reference_point}
        try:
            if self.preset == "heisenberg":
                return preset("heisenberg", m=self.m, vertical=self.vertical, **kw)
            if self.preset is not None:
                return preset(self.preset, **kw)
            return SRStructure(self.chart, self.frame, name=self.name, **kw)
        except ParseError as exc:
            raise ConfigError(f"frame expression: {exc}", "/structure/frame") from None
        except ValueError as exc:
            if isinstance(exc, ArithmeticError):
                raise
            raise ConfigError(str(exc), "/structure") from None


@dataclass
class SurfaceConfig:
    F: str
    level: float = 0.0


@dataclass
class SweepConfig:
    gamma: list
    phi0: str
    s_range: tuple
    t_range: tuple
    n_s: int = DEFAULT_NS
    n_t: int = DEFAULT_NT
    h: float = DEFAULT_H
    box: list | None = None


@dataclass
class SearchConfig:
    box: list
    resolution: int = 21
    loop_radius: float = 1e-2


@dataclass
class ResidualConfig:
    box: list
    resolution: int = 9
    min_d1: float = 0.1


@dataclass
class GeodesicConfig:
    q0: list
    psi: float
    t_range: tuple
    u3: float = 0.0
    h: float = DEFAULT_H
    box: list | None = None


@dataclass
class RunConfig:
    structure: StructureConfig | None = None
    surface: SurfaceConfig | None = None
    sweep: SweepConfig | None = None
    search: SearchConfig | None = None
    residual: ResidualConfig | None = None
    geodesic: GeodesicConfig | None = None
    out_dir: str | None = None
    name: str = "run"
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def effective(self) -> dict:
        """The raw document with defaults filled in; loadable again as-is."""
        doc = copy.deepcopy(self.raw)
        if self.sweep is not None:
            for key, val in (("n_s", DEFAULT_NS), ("n_t", DEFAULT_NT), ("h", DEFAULT_H)):
                doc["sweep"].setdefault(key, val)
        if self.surface is not None:
            doc["surface"].setdefault("level", 0.0)
        if self.search is not None:
            doc["search"].setdefault("resolution", 21)
            doc["search"].setdefault("loop_radius", 1e-2)
        if self.residual is not None:
            doc["residual"].setdefault("resolution", 9)
            doc["residual"].setdefault("min_d1", 0.1)
        if self.geodesic is not None:
            doc["geodesic"].setdefault("u3", 0.0)
            doc["geodesic"].setdefault("h", DEFAULT_H)
        doc.setdefault("seed", self.seed)
        return doc


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path) or "/"


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document and convert it to dataclasses."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        if err.context:  # oneOf: report errors of the branch the document aims at
            branch = 0 if isinstance(err.instance, dict) and "preset" in err.instance else 1
            inner = [e for e in err.context if e.relative_schema_path[0] == branch]
            err = min(inner or err.context, key=lambda e: len(e.absolute_path))
        raise ConfigError(f"schema violation: {err.message}", _pointer(err.absolute_path))

    cfg = RunConfig(raw=copy.deepcopy(doc), seed=doc.get("seed", 0))
    s = doc.get("structure")
    if s is not None:
        ref = s.get("reference_point")
        ref = [constant(v, f"/structure/reference_point/{i}") for i, v in enumerate(ref)] if ref else None
        cfg.structure = StructureConfig(
            preset=s.get("preset"), m=s.get("m", 1), vertical=s.get("vertical", 1),
            chart=s.get("chart"), frame=s.get("frame"), reference_point=ref,
            orientation=s.get("orientation", "auto"), name=s.get("name"))
        if s.get("m", 1) != 1 and s.get("preset") != "heisenberg":
            raise ConfigError("m only applies to the heisenberg preset", "/structure/m")
    if "surface" in doc:
        d = doc["surface"]
        cfg.surface = SurfaceConfig(d["F"], constant(d.get("level", 0.0), "/surface/level"))
    if "sweep" in doc:
        d = doc["sweep"]
        cfg.sweep = SweepConfig(d["gamma"], d["phi0"], _pair(d["s_range"], "/sweep/s_range"),
                                _pair(d["t_range"], "/sweep/t_range"), d.get("n_s", DEFAULT_NS),
                                d.get("n_t", DEFAULT_NT), d.get("h", DEFAULT_H),
                                _box_of(d.get("box"), "/sweep/box"))
        for i, g in enumerate(cfg.sweep.gamma + [cfg.sweep.phi0]):
            where = f"/sweep/gamma/{i}" if i < 3 else "/sweep/phi0"
            try:
                parse_expression(g, ["s"])
            except ParseError as exc:
                raise ConfigError(f"expression error: {exc}", where) from None
        lo, hi = cfg.sweep.t_range
        if not lo <= 0.0 <= hi:
            raise ConfigError("t_range must contain 0", "/sweep/t_range")
    if "search" in doc:
        d = doc["search"]
        cfg.search = SearchConfig(_box_of(d["box"], "/search/box"), d.get("resolution", 21),
                                  d.get("loop_radius", 1e-2))
    if "residual" in doc:
        d = doc["residual"]
        cfg.residual = ResidualConfig(_box_of(d["box"], "/residual/box"), d.get("resolution", 9),
                                      d.get("min_d1", 0.1))
    if "geodesic" in doc:
        d = doc["geodesic"]
        cfg.geodesic = GeodesicConfig(
            [constant(v, f"/geodesic/q0/{i}") for i, v in enumerate(d["q0"])],
            constant(d["psi"], "/geodesic/psi"), _pair(d["t_range"], "/geodesic/t_range"),
            constant(d.get("u3", 0.0), "/geodesic/u3"), d.get("h", DEFAULT_H),
            _box_of(d.get("box"), "/geodesic/box"))
    out = doc.get("output", {})
    cfg.out_dir = out.get("dir")
    cfg.name = out.get("name", "run")
    return cfg


def packaged_configs() -> list:
    root = resources.files("srminimal") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config_path(name_or_path: str):
    """A filesystem path, or the name of a packaged config (``fig1a`` ...)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    packaged = resources.files("srminimal") / "configs" / f"{stem}.json"
    if packaged.is_file():
        return packaged
    raise ConfigError(f"config file not found: {name_or_path}", "")


def load_config(path) -> RunConfig:
    src = resolve_config_path(str(path))
    try:
        doc = json.loads(src.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}", "") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", "/")
    return parse_config(doc)
