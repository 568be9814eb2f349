"""Scenario files: YAML documents validated against a fixed schema.

Units are fixed SI (rad, m, kg, s, N); an optional ``units`` block may
restate them and is rejected if it disagrees.  Every key is checked against
:data:`SCHEMA`, and errors carry the offending key path and source line.
"""
from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError, KincbfError
from .models import MODEL_REGISTRY
from .sim import Scenario

UNITS = {"angle": "rad", "length": "m", "mass": "kg", "time": "s", "force": "N"}

# leaf tags
NUM, INT, BOOL, STR, VEC, NUM_OR_AUTO, NUM_OR_VEC, LIST, PARAMS = (
    "number", "integer", "boolean", "string", "list of numbers",
    "number or 'auto'", "number or list of numbers", "list", "model parameters",
)

SCHEMA = {
    "name": STR,
    "units": {k: STR for k in UNITS},
    "model": {"id": STR, "params": PARAMS},
    "barrier": {"type": STR, "center": NUM_OR_VEC, "d": NUM, "width": NUM, "index": INT, "limit": NUM},
    "filter": {
        "id": STR,
        "alpha": {"kind": STR, "gamma": NUM},
        "alpha_e": NUM,
        "K_vel": NUM_OR_VEC,
        "c_u": NUM_OR_AUTO,
        "c_l": NUM_OR_AUTO,
        "bound_factor": NUM,
        "mode": STR,
        "precompensate_gravity": BOOL,
    },
    "task": {
        "kind": STR, "point": VEC, "start": VEC, "velocity": VEC, "center": VEC,
        "radius": NUM, "omega": NUM, "phase": NUM, "lambda": NUM,
    },
    "controller": {"kind": STR, "kp": NUM, "kd": NUM, "state_gains": VEC, "q_goal": VEC},
    "initial": {
        "q": VEC, "qdot": VEC, "sample": BOOL, "margin": NUM, "velocity_scale": NUM,
        "q_lo": VEC, "q_hi": VEC,
    },
    "dt": NUM,
    "horizon": NUM,
    "seed": INT,
    "sweep": {"param": STR, "values": LIST},
    "output": STR,
}

REQUIRED = [("name",), ("model", "id"), ("barrier", "type"), ("filter", "id"), ("task", "kind"), ("initial",)]


@dataclass
class Sweep:
    param: str
    values: list


@dataclass
class Config:
    scenario: Scenario
    sweep: Sweep | None = None
    output: str | None = None
    source: str | None = None


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _key_lines(node, path=(), out=None) -> dict:
    """Map key paths to 1-based source lines; rejects duplicate keys."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for knode, vnode in node.value:
            key = knode.value
            sub = path + (key,)
            if key in seen:
                raise ConfigError("duplicate key", key=".".join(sub), line=knode.start_mark.line + 1)
            seen.add(key)
            out[sub] = knode.start_mark.line + 1
            _key_lines(vnode, sub, out)
    return out


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _leaf(tag, value, key, line):
    def bad():
        return ConfigError(f"expected {tag}, got {value!r}", key=key, line=line)

    if tag == NUM:
        if not _is_num(value):
            raise bad()
        return float(value)
    if tag == INT:
        if not (isinstance(value, int) and not isinstance(value, bool)):
            raise bad()
        return value
    if tag == BOOL:
        if not isinstance(value, bool):
            raise bad()
        return value
    if tag == STR:
        if not isinstance(value, str):
            raise bad()
        return value
    if tag == VEC:
        if not (isinstance(value, list) and value and all(_is_num(v) for v in value)):
            raise bad()
        return [float(v) for v in value]
    if tag == NUM_OR_AUTO:
        if value == "auto":
            return value
        if not _is_num(value):
            raise bad()
        return float(value)
    if tag == NUM_OR_VEC:
        if _is_num(value):
            return float(value)
        return _leaf(VEC, value, key, line)
    if tag == LIST:
        if not isinstance(value, list):
            raise bad()
        return list(value)
    if tag == PARAMS:
        if not isinstance(value, dict):
            raise bad()
        return {k: (v if isinstance(v, bool) else _leaf(NUM, v, f"{key}.{k}", line)) for k, v in value.items()}
    raise AssertionError(tag)


def _validate(data, schema, lines, path=()) -> dict:
    key = ".".join(path) or "<root>"
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", key=key, line=lines.get(path))
    out = {}
    for k, v in data.items():
        sub = path + (str(k),)
        if k not in schema:
            raise ConfigError("unknown key", key=".".join(sub), line=lines.get(sub))
        sub_schema = schema[k]
        if isinstance(sub_schema, dict):
            out[k] = _validate(v, sub_schema, lines, sub)
        else:
            out[k] = _leaf(sub_schema, v, ".".join(sub), lines.get(sub))
    return out


def _check_model_params(data, lines):
    model = data["model"]
    cls = MODEL_REGISTRY.get(model["id"])
    if cls is None:
        raise ConfigError(f"unknown model, choose from {sorted(MODEL_REGISTRY)}",
                          key="model.id", line=lines.get(("model", "id")))
    allowed = {f.name for f in dataclasses.fields(cls) if f.init}
    for k in model.get("params", {}):
        if k not in allowed:
            raise ConfigError(f"unknown parameter for {model['id']}, choose from {sorted(allowed)}",
                              key=f"model.params.{k}", line=lines.get(("model", "params", k)))


def _schema_has(param: str) -> bool:
    node = SCHEMA
    for part in param.split("."):
        if not isinstance(node, dict):
            return node == PARAMS
        if part not in node:
            return False
        node = node[part]
    return True


def set_path(data: dict, param: str, value) -> None:
    """Assign ``value`` at a dotted key path, creating mappings on the way."""
    if not _schema_has(param) or param.startswith("sweep"):
        raise ConfigError("unknown parameter", key=param)
    parts = param.split(".")
    node = data
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError("cannot descend into a non-mapping value", key=param)
        node = nxt
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as a YAML scalar or flow list."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value: {exc}", key=key) from None
    return key.strip(), value


def _to_scenario(data: dict) -> Scenario:
    for req in REQUIRED:
        node = data
        for part in req:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError("missing required key", key=".".join(req))
            node = node[part]
    units = data.get("units", {})
    for k, v in units.items():
        if v != UNITS[k]:
            raise ConfigError(f"unsupported unit, expected '{UNITS[k]}'", key=f"units.{k}")
    try:
        return Scenario(
            name=data["name"],
            model=data["model"]["id"],
            barrier=data["barrier"],
            filter=data["filter"],
            task=data["task"],
            initial=data["initial"],
            model_params=data["model"].get("params", {}),
            controller=data.get("controller", {}),
            dt=data.get("dt", 1e-3),
            horizon=data.get("horizon", 10.0),
            seed=data.get("seed", 0),
        )
    except KincbfError as exc:
        raise ConfigError(str(exc)) from None


def load_data(text: str, overrides=()) -> tuple[dict, dict]:
    """Validated (data, key lines) for a document, after applying overrides."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line=line) from None
    if data is None:
        raise ConfigError("empty document")
    lines = _key_lines(node)
    data = copy.deepcopy(data)
    for key, value in overrides:
        if isinstance(data, dict):
            set_path(data, key, value)
    data = _validate(data, SCHEMA, lines)
    if "model" in data and "id" in data["model"]:
        _check_model_params(data, lines)
    return data, lines


def loads(text: str, overrides=(), source=None) -> Config:
    data, lines = load_data(text, overrides)
    sc = _to_scenario(data)
    sweep = None
    if "sweep" in data:
        sw = data["sweep"]
        if "param" not in sw or "values" not in sw:
            raise ConfigError("sweep needs 'param' and 'values'", key="sweep", line=lines.get(("sweep",)))
        sweep = Sweep(sw["param"], sw["values"])
    return Config(sc, sweep, data.get("output"), source)


def load(path, overrides=()) -> Config:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return loads(text, overrides, source=str(p))


def sweep_scenarios(cfg_text: str, param: str, values, overrides=()) -> list[Scenario]:
    """One scenario per value of ``param``; an empty list is an error."""
    if not values:
        raise ConfigError("sweep value list is empty", key=param)
    if not _schema_has(param):
        raise ConfigError("unknown sweep parameter", key=param)
    out = []
    for v in values:
        sc = loads(cfg_text, list(overrides) + [(param, v)]).scenario
        out.append(sc)
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def to_data(cfg: Config) -> dict:
    sc = cfg.scenario
    model = {"id": sc.model}
    if sc.model_params:
        model["params"] = dict(sc.model_params)
    data = {
        "name": sc.name,
        "units": dict(UNITS),
        "model": model,
        "barrier": dict(sc.barrier),
        "filter": dict(sc.filter),
        "task": dict(sc.task),
        "controller": dict(sc.controller),
        "initial": dict(sc.initial),
        "dt": sc.dt,
        "horizon": sc.horizon,
        "seed": sc.seed,
    }
    if not sc.controller:
        del data["controller"]
    if cfg.sweep is not None:
        data["sweep"] = {"param": cfg.sweep.param, "values": list(cfg.sweep.values)}
    if cfg.output is not None:
        data["output"] = cfg.output
    return data


def dumps(cfg: Config) -> str:
    return yaml.safe_dump(to_data(cfg), sort_keys=False, default_flow_style=None)
