"""Schema-versioned CSV/JSON serialization of runs, sweeps and fits.

Every CSV starts with a '# schema: <name>' line followed by the column
header; floats are written with 17 significant digits so identical runs
produce byte-identical files.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .errors import ConfigError

PROFILE_SCHEMA = "thinfilm.profile.v1"
DIAGNOSTICS_SCHEMA = "thinfilm.diagnostics.v1"
SWEEP_SCHEMA = "thinfilm.sweep.v1"
FIT_SCHEMA = "thinfilm.fit.v1"

DIAG_COLUMNS = ("t", "s", "sdot", "energy", "dissipation", "mass", "energy_residual")
SWEEP_COLUMNS = ("law", "epsilon", "theta", "gamma_fit", "sdot_measured",
                 "sdot_predicted", "relative_error", "status")


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def write_profile_csv(path, traj) -> None:
    """Profile snapshots, one block per stored state; columns t,xi,h (or t,x,h)."""
    coord = "xi" if traj.config.frame == "moving" else "x"
    xi = traj.config.grid.xi
    with open(path, "w") as f:
        f.write(f"# schema: {PROFILE_SCHEMA}\n")
        f.write(f"t,{coord},h\n")
        for _, state in traj.states:
            t = _fmt(state.t)
            for x, h in zip(xi, state.h):
                f.write(f"{t},{_fmt(x)},{_fmt(h)}\n")


def write_inner_profile_csv(path, sol) -> None:
    """Inner-region solution in the shared profile schema (t column is 0)."""
    with open(path, "w") as f:
        f.write(f"# schema: {PROFILE_SCHEMA}\n")
        f.write("t,xi,h\n")
        for y, H in zip(sol.y_nodes, sol.H):
            f.write(f"0,{_fmt(y)},{_fmt(H)}\n")


def write_diagnostics_csv(path, traj) -> None:
    with open(path, "w") as f:
        f.write(f"# schema: {DIAGNOSTICS_SCHEMA}\n")
        f.write(",".join(DIAG_COLUMNS) + "\n")
        for t, s, sd, d in zip(traj.times, traj.positions, traj.speeds, traj.diagnostics):
            row = (t, s, sd, d.energy, d.dissipation, d.mass, d.energy_residual)
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_sweep_csv(path, records) -> None:
    with open(path, "w") as f:
        f.write(f"# schema: {SWEEP_SCHEMA}\n")
        f.write(",".join(SWEEP_COLUMNS) + "\n")
        for r in records:
            status = r.status.replace(",", ";")
            row = [r.law, _fmt(r.epsilon), _fmt(r.theta), _fmt(r.gamma_fit),
                   _fmt(r.sdot_measured), _fmt(r.sdot_predicted),
                   _fmt(r.relative_error), status]
            f.write(",".join(row) + "\n")


def write_fit_json(path, law, fit, eps_range) -> None:
    payload = {
        "schema": FIT_SCHEMA,
        "law": law,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
        "eps_range": [float(eps_range[0]), float(eps_range[-1])],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_schema(path) -> str:
    with open(path) as f:
        first = f.readline().strip()
    if not first.startswith("# schema:"):
        raise ConfigError(f"{path}: missing schema header line")
    return first.split(":", 1)[1].strip()


def _read_table(path, expected_schema):
    schema = read_schema(path)
    if schema != expected_schema:
        raise ConfigError(f"{path}: schema {schema!r} does not match {expected_schema!r}")
    with open(path) as f:
        f.readline()
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    return header, rows


def read_diagnostics_csv(path):
    header, rows = _read_table(path, DIAGNOSTICS_SCHEMA)
    if tuple(header) != DIAG_COLUMNS:
        raise ConfigError(f"{path}: unexpected diagnostics columns {header}")
    data = np.array([[float(v) for v in r] for r in rows])
    return {name: data[:, k] for k, name in enumerate(DIAG_COLUMNS)}


def read_profile_csv(path):
    """Return the list of (t, xi, h) snapshot blocks."""
    header, rows = _read_table(path, PROFILE_SCHEMA)
    if len(header) != 3 or header[0] != "t":
        raise ConfigError(f"{path}: unexpected profile columns {header}")
    blocks = []
    cur_t = None
    xs, hs = [], []
    for r in rows:
        t, x, h = (float(v) for v in r)
        if cur_t is None or t != cur_t:
            if xs:
                blocks.append((cur_t, np.array(xs), np.array(hs)))
            cur_t, xs, hs = t, [], []
        xs.append(x)
        hs.append(h)
    if xs:
        blocks.append((cur_t, np.array(xs), np.array(hs)))
    return blocks


def write_manifest(path, payload) -> None:
    """Atomic write of the run manifest."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
