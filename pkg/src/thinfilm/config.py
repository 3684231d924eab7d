"""Run configuration: a small dotted-key text format, with JSON accepted.

Grammar (text form)::

    # full-line comments and blank lines are ignored
    key = value          e.g.  n = 2
    key.sub = value      e.g.  grid.kind = graded

Values are parsed as JSON scalars where possible (numbers, true/false,
quoted strings) and kept as bare strings otherwise. A JSON file encoding
the same nested mapping is accepted interchangeably; the format is detected
from the first non-blank character. Every config must carry ``schema = 1``.
"""
from __future__ import annotations

import json
from dataclasses import replace

from .errors import ConfigError
from .model import SlipParameters
from .pde_solver import Grid, SolverConfig

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema", "n", "epsilon", "theta", "no_slip_limit", "frame", "far_field",
    "far_field_gamma", "mobility_face_average", "dt0", "dt_min", "dt_max",
    "newton_tol", "newton_max_iter", "initial_profile", "t_end",
    "snapshot_every", "grid", "initial",
}

DEFAULTS = {
    "n": 2.0,
    "epsilon": 1e-3,
    "theta": 1.0,
    "no_slip_limit": False,
    "frame": "moving",
    "far_field": "zero-curvature",
    "far_field_gamma": 1.0,
    "mobility_face_average": "arithmetic",
    "dt0": 1e-6,
    "dt_min": 1e-13,
    "dt_max": 0.02,
    "newton_tol": 1e-9,
    "newton_max_iter": 25,
    "initial_profile": "wedge",
    "t_end": 1.0,
    "snapshot_every": 50,
}


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("JSON config must encode an object")
        return data
    tree: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: key {key!r} nests under a scalar")
        node[parts[-1]] = _parse_scalar(value.strip())
    return tree


def parse_config_file(path) -> dict:
    try:
        with open(path) as f:
            return parse_config_text(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")


def _get(tree, key, cast=None):
    value = tree.get(key, DEFAULTS.get(key))
    if cast is not None and value is not None:
        try:
            value = cast(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config key '{key}': cannot interpret {value!r}")
    return value


def _build_grid(tree) -> Grid:
    g = tree.get("grid", {})
    if not isinstance(g, dict):
        raise ConfigError("config key 'grid': expected a table of grid.* keys")
    kind = g.get("kind", "uniform")
    try:
        if kind == "uniform":
            N = int(g.get("N", 1024))
            L = float(g.get("L", 4.0))
            dxi = float(g.get("dxi", L / N))
            return Grid.uniform(N, dxi)
        if kind == "graded":
            dxi0 = float(g.get("dxi0", 2.5e-4))
            L = float(g.get("L", 4.0))
            ratio = float(g.get("ratio", 1.05))
            dxi_max = g.get("dxi_max")
            return Grid.graded(dxi0, L, ratio, float(dxi_max) if dxi_max is not None else None)
    except ConfigError as exc:
        raise ConfigError(f"config key 'grid': {exc}")
    raise ConfigError(f"config key 'grid.kind': unknown kind {kind!r}")


def build_solver_config(tree: dict):
    """Validate a parsed config tree; returns (SolverConfig, run_options).

    Raises ConfigError whose message names the offending key.
    """
    schema = tree.get("schema")
    if schema is None:
        raise ConfigError("config key 'schema': missing (expected schema = 1)")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"config key 'schema': unknown version {schema!r} "
                          f"(this tool reads version {SCHEMA_VERSION})")
    unknown = set(tree) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"config key '{sorted(unknown)[0]}': not a recognized key")
    try:
        p = SlipParameters(n=_get(tree, "n", float),
                           epsilon=_get(tree, "epsilon", float),
                           theta=_get(tree, "theta", float),
                           no_slip_limit=bool(_get(tree, "no_slip_limit")))
    except ValueError as exc:
        raise ConfigError(f"config key 'n'/'epsilon'/'theta': {exc}")
    grid = _build_grid(tree)
    initial = tree.get("initial", {})
    if not isinstance(initial, dict):
        raise ConfigError("config key 'initial': expected a table of initial.* keys")
    try:
        cfg = SolverConfig(
            p=p,
            grid=grid,
            dt0=_get(tree, "dt0", float),
            dt_min=_get(tree, "dt_min", float),
            dt_max=_get(tree, "dt_max", float),
            newton_tol=_get(tree, "newton_tol", float),
            newton_max_iter=_get(tree, "newton_max_iter", int),
            far_field=_get(tree, "far_field", str),
            far_field_gamma=_get(tree, "far_field_gamma", float),
            frame=_get(tree, "frame", str),
            mobility_face_average=_get(tree, "mobility_face_average", str),
            initial_profile=_get(tree, "initial_profile", str),
            initial_params=dict(initial),
        )
    except ValueError as exc:
        raise ConfigError(f"config: {exc}")
    run_options = {
        "t_end": _get(tree, "t_end", float),
        "snapshot_every": _get(tree, "snapshot_every", int),
    }
    if run_options["t_end"] < 0.0:
        raise ConfigError("config key 't_end': must be nonnegative")
    if run_options["snapshot_every"] != cfg.snapshot_every:
        cfg = replace(cfg, snapshot_every=run_options["snapshot_every"])
    return cfg, run_options
