"""Energy, cumulative dissipation and identity residual over time.

Usage: thinfilm-plot-energy DIAGNOSTICS_CSV --out FIG.svg
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .schema import SchemaError, new_figure, read_diagnostics, save_figure


def render(diag_csv, out_image):
    d = read_diagnostics(diag_csv)
    t = d["t"]
    # cumulative dissipated energy from the per-step rate column
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d["dissipation"][1:] + d["dissipation"][:-1])
                                           * np.diff(t))])
    plt = new_figure()
    fig, axes = plt.subplots(2, 1, figsize=(5.0, 5.2), sharex=True)
    axes[0].plot(t, d["energy"], "-", color="#1f5fa8", label="energy")
    axes[0].plot(t, d["energy"][0] - cum, "--", color="#b03a2e",
                 label="initial energy - cumulative dissipation")
    axes[0].set_ylabel("surface energy")
    axes[0].legend(fontsize=8)
    axes[1].plot(t[1:], np.abs(d["energy_residual"][1:]), "-", color="#4a7729")
    axes[1].set_yscale("log")
    axes[1].set_ylabel("|identity residual|")
    axes[1].set_xlabel("time")
    fig.tight_layout()
    save_figure(fig, out_image)
    plt.close(fig)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("diag_csv")
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        render(args.diag_csv, args.out)
    except (SchemaError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
