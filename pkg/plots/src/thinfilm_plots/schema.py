"""Schema-validated readers for the solver's CSV/JSON outputs."""
from __future__ import annotations

import json

import numpy as np

PROFILE_SCHEMA = "thinfilm.profile.v1"
DIAGNOSTICS_SCHEMA = "thinfilm.diagnostics.v1"
SWEEP_SCHEMA = "thinfilm.sweep.v1"
FIT_SCHEMA = "thinfilm.fit.v1"


class SchemaError(ValueError):
    pass


def read_table(path, expected_schema):
    with open(path) as f:
        first = f.readline().strip()
        if not first.startswith("# schema:"):
            raise SchemaError(f"{path}: missing schema header")
        schema = first.split(":", 1)[1].strip()
        if schema != expected_schema:
            raise SchemaError(f"{path}: schema {schema!r}, expected {expected_schema!r}")
        header = f.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return header, rows


def read_sweep(path):
    header, rows = read_table(path, SWEEP_SCHEMA)
    cols = {name: [] for name in header}
    for r in rows:
        for name, val in zip(header, r):
            cols[name].append(val)
    out = {}
    for name in header:
        if name in ("law", "status"):
            out[name] = cols[name]
        else:
            out[name] = np.array([float(v) for v in cols[name]])
    return out


def read_diagnostics(path):
    header, rows = read_table(path, DIAGNOSTICS_SCHEMA)
    data = np.array([[float(v) for v in r] for r in rows])
    return {name: data[:, k] for k, name in enumerate(header)}


def read_profile_blocks(path):
    header, rows = read_table(path, PROFILE_SCHEMA)
    blocks = []
    cur = None
    xs, hs = [], []
    for r in rows:
        t, x, h = (float(v) for v in r)
        if cur is None or t != cur:
            if xs:
                blocks.append((cur, np.array(xs), np.array(hs)))
            cur, xs, hs = t, [], []
        xs.append(x)
        hs.append(h)
    if xs:
        blocks.append((cur, np.array(xs), np.array(hs)))
    return blocks


def read_fit(path):
    with open(path) as f:
        data = json.load(f)
    if data.get("schema") != FIT_SCHEMA:
        raise SchemaError(f"{path}: fit JSON schema mismatch")
    return data


def new_figure():
    """Deterministic matplotlib setup (Agg, fixed hash salt, no dates)."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "thinfilm-plots"
    import matplotlib.pyplot as plt
    return plt


def save_figure(fig, out_path):
    kw = {}
    if str(out_path).endswith(".svg"):
        kw["metadata"] = {"Date": None}
    fig.savefig(out_path, **kw)
