"""Strict JSON run configuration.

Every config carries ``schema_version``.  Unknown keys are rejected, and every
diagnostic names the line of the offending key so typos do not silently fall
back to defaults.
"""
from dataclasses import dataclass, field, fields
import hashlib
import json
import re

from .errors import ConfigError

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "analyze", "fit", "plan", "reproduce")


@dataclass
class RunConfig:
    command: str = None
    seed: int = 0
    scenario: str = None
    params: dict = field(default_factory=dict)
    shots: int = None
    threads: int = None
    out: str = "."
    input: str = None

    def canonical(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("out", "input", "threads")}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


_TOP_KEYS = {"schema_version", "command", "seed", "scenario", "params", "shots", "threads", "out", "input"}


def _line_of(text, key):
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(path, text, key, msg):
    line = _line_of(text, key) if key else None
    where = f"{path}:{line}" if line else str(path)
    raise ConfigError(f"{where}: {msg}")


def _check_int(path, text, key, value, minimum, maximum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, text, key, f"'{key}' must be an integer, got {value!r}")
    if value < minimum or (maximum is not None and value > maximum):
        _fail(path, text, key, f"'{key}' out of range: {value}")


def parse_config(text, path="<config>"):
    """Parse config text into a :class:`RunConfig`.

    ``scenario`` is either a preset name or an object
    ``{"name": ..., <parameter overrides>}``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        _fail(path, text, unknown[0], f"unknown key '{unknown[0]}' (allowed: {sorted(_TOP_KEYS)})")
    if "schema_version" not in raw:
        raise ConfigError(f"{path}:1: missing 'schema_version'")
    if raw["schema_version"] != SCHEMA_VERSION:
        _fail(path, text, "schema_version", f"unsupported schema_version {raw['schema_version']!r}, expected {SCHEMA_VERSION}")
    cfg = RunConfig()
    if "command" in raw:
        if raw["command"] not in COMMANDS:
            _fail(path, text, "command", f"unknown command {raw['command']!r}")
        cfg.command = raw["command"]
    if "seed" in raw:
        _check_int(path, text, "seed", raw["seed"], 0, 2**64 - 1)
        cfg.seed = raw["seed"]
    for key in ("shots", "threads"):
        if key in raw:
            _check_int(path, text, key, raw[key], 1)
            setattr(cfg, key, raw[key])
    for key in ("out", "input"):
        if key in raw:
            if not isinstance(raw[key], str):
                _fail(path, text, key, f"'{key}' must be a path string")
            setattr(cfg, key, raw[key])
    params = raw.get("params", {})
    scen = raw.get("scenario")
    if isinstance(scen, dict):
        if "name" not in scen:
            _fail(path, text, "scenario", "inline scenario needs a 'name'")
        params = {**{k: v for k, v in scen.items() if k != "name"}, **params}
        scen = scen["name"]
    if scen is not None and not isinstance(scen, str):
        _fail(path, text, "scenario", "'scenario' must be a name or an object")
    if not isinstance(params, dict):
        _fail(path, text, "params", "'params' must be an object")
    cfg.scenario = scen
    cfg.params = params
    cfg._source = (path, text)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, path)


def check_params(cfg, allowed):
    """Reject scenario parameters the scenario does not understand."""
    unknown = sorted(set(cfg.params) - set(allowed))
    if unknown:
        path, text = getattr(cfg, "_source", ("<config>", ""))
        _fail(path, text, unknown[0], f"scenario '{cfg.scenario}' has no parameter '{unknown[0]}' (allowed: {sorted(allowed)})")
