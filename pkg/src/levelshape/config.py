"""JSON run configuration: strict schema, expression/file data, and builders for the numerical objects."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .expr import ExpressionError, compile_expr
from .grid import FieldFormatError, Grid2D, ObservationSet, ScalarField, read_field
from .nonsmooth import ParameterError, make_beta


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_EPS_LIST = {"type": "array", "items": _POS, "minItems": 1}
_EXPR_LIST = {"type": "array", "items": {"type": "string"}, "minItems": 1}
_DATA = {
    "oneOf": [
        {"type": "string"},
        {"type": "number"},
        {"type": "object", "properties": {"file": {"type": "string"}}, "required": ["file"], "additionalProperties": False},
        {"type": "object", "properties": {"masked_state": {"type": "string"}},
         "required": ["masked_state"], "additionalProperties": False},
    ]
}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "domain": _obj({"x0": _NUM, "y0": _NUM, "width": _POS, "height": _POS,
                    "nx": {"type": "integer", "minimum": 3}, "ny": {"type": "integer", "minimum": 3}},
                   ["x0", "y0", "width", "height", "nx"]),
    "observation": {"oneOf": [{"type": "null"}, _obj({"kind": {"enum": ["disk", "rectangle"]},
                                                      "params": {"type": "array", "items": _NUM}},
                                                     ["kind", "params"])]},
    "beta": _obj({"name": {"type": "string"}, "params": {"type": "object"}}, ["name"]),
    "data": _obj({"f": _DATA, "y_d": _DATA, "g": _DATA, "exact": _DATA, "target_shape": _DATA}),
    "penalty": _obj({"alpha": {"type": "number", "minimum": 0}, "eps": _POS, "eps_schedule": _EPS_LIST,
                     "include_eg": {"type": "boolean"}, "mode": {"enum": ["penalized", "masked"]},
                     "tol": _POS, "zeta_rule": {"enum": ["plus", "minus", "midpoint"]}}),
    "anchor": {"oneOf": [{"type": "null"}, _obj({"file": {"type": "string"}}, ["file"]),
                         _obj({"expr": {"type": "string"}}, ["expr"])]},
    "optimizer": _obj({"step0": _POS, "armijo_c": _POS, "max_iter": {"type": "integer", "minimum": 0},
                       "tol": {"type": "number", "minimum": 0}, "max_move": {"type": "number", "minimum": 0},
                       "max_backtrack": {"type": "integer", "minimum": 1},
                       "init": _obj({"radius": _POS, "amplitude": _POS,
                                     "center": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}),
                       "g0": _DATA}),
    "verify": _obj({"checks": {"type": "array", "items": {"enum": ["admissibility", "coarea", "dirac", "tubes",
                                                                    "periods", "hausdorff", "signs", "conjecture"]}},
                    "eps": _POS, "eps_list": _EPS_LIST, "z": {"type": "number", "minimum": 0, "maximum": 1},
                    "phi": _EXPR_LIST, "basis_per_axis": {"type": "integer", "minimum": 1},
                    "kappa": {"type": "string"}, "families": _EXPR_LIST,
                    "case": {"enum": ["f01", "f00"]}, "coarea_tol": _POS, "step_fraction": _POS}),
    "trace": _obj({"level": _NUM, "step_fraction": _POS}),
    "output": _obj({"dir": {"type": "string"}}),
    "seed": {"type": "integer", "minimum": 0},
}, ["domain"])


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    def section(self, name) -> dict:
        v = self.raw.get(name)
        return dict(v) if isinstance(v, dict) else {}

    @property
    def grid(self) -> Grid2D:
        d = self.raw["domain"]
        return Grid2D.from_box(d["x0"], d["y0"], d["width"], d["height"], d["nx"], d.get("ny"))

    @property
    def obs(self) -> ObservationSet | None:
        o = self.raw.get("observation")
        if o is None:
            return None
        try:
            obs = ObservationSet(o["kind"], tuple(o["params"]))
            obs.check_inside(self.grid)
        except ValueError as exc:
            raise ConfigError(f"observation: {exc}") from None
        return obs

    @property
    def beta(self):
        b = self.raw.get("beta", {"name": "max0"})
        try:
            return make_beta(b["name"], b.get("params"))
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"beta: {exc}") from None

    def has(self, key) -> bool:
        return key in self.section("data")

    def field(self, key, default=None, f: ScalarField | None = None) -> ScalarField:
        data = self.section("data")
        if key not in data:
            if default is None:
                raise ConfigError(f"data.{key} is required for this command")
            return ScalarField.constant(self.grid, default)
        return self.resolve(data[key], f"data.{key}", f)

    def resolve(self, entry, where, f: ScalarField | None = None) -> ScalarField:
        grid = self.grid
        if isinstance(entry, (int, float)):
            return ScalarField.constant(grid, float(entry))
        if isinstance(entry, str):
            return ScalarField.from_function(grid, self.expr(entry, where))
        if "file" in entry:
            path = self.path(entry["file"])
            try:
                u = read_field(path)
            except FileNotFoundError:
                raise ConfigError(f"{where}: field file not found: {path}") from None
            except FieldFormatError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            if u.grid != grid:
                raise ConfigError(f"{where}: field {path} lives on a different grid")
            return u
        from .state import StateProblem, solve_state
        shape = ScalarField.from_function(grid, self.expr(entry["masked_state"], where))
        forcing = f if f is not None else self.field("f", 0.0)
        return solve_state(StateProblem(grid, forcing, shape, self.beta, mode="masked")).y

    def expr(self, src, where):
        try:
            return compile_expr(src)
        except ExpressionError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def echo(self) -> dict:
        return copy.deepcopy(self.raw)


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {loc}: {exc.message}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    validate(raw)
    cfg = RunConfig(raw, path.resolve().parent)
    # eager checks: referenced files exist and expressions parse
    for key, entry in cfg.section("data").items():
        if isinstance(entry, dict) and "file" in entry and not cfg.path(entry["file"]).exists():
            raise ConfigError(f"data.{key}: field file not found: {cfg.path(entry['file'])}")
        if isinstance(entry, str):
            cfg.expr(entry, f"data.{key}")
    anchor = raw.get("anchor")
    if isinstance(anchor, dict) and "file" in anchor and not cfg.path(anchor["file"]).exists():
        raise ConfigError(f"anchor: field file not found: {cfg.path(anchor['file'])}")
    cfg.beta
    cfg.obs
    return cfg
