"""Contact-line speed vs 1/ln(1/eps): sweep scatter, fitted line, law reference.

Usage: thinfilm-plot-speed-law SWEEP_CSV FIT_JSON --out FIG.svg
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .schema import SchemaError, new_figure, read_fit, read_sweep, save_figure


def render(sweep_csv, fit_json, out_image):
    sweep = read_sweep(sweep_csv)
    fit = read_fit(fit_json)
    ok = np.array([s == "ok" for s in sweep["status"]])
    if not ok.any():
        raise SchemaError(f"{sweep_csv}: no successful records to plot")
    x = 1.0 / np.log(1.0 / sweep["epsilon"][ok])
    y = sweep["sdot_measured"][ok]
    # law reference slope from the prediction column (no physics recomputed)
    ref_slope = float(np.mean(sweep["sdot_predicted"][ok] / x))

    plt = new_figure()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(x, y, "o", color="#1f5fa8", label="measured")
    xs = np.linspace(0.0, float(x.max()) * 1.1, 32)
    ax.plot(xs, fit["slope"] * xs + fit["intercept"], "-", color="#b03a2e",
            label=f"fit: slope {fit['slope']:.3g}")
    ax.plot(xs, ref_slope * xs, "--", color="#666666",
            label=f"law reference: slope {ref_slope:.3g}")
    ax.set_xlabel(r"$1/\ln(1/\epsilon)$")
    ax.set_ylabel(r"contact speed $\dot{s}$")
    ax.set_title(f"{fit['law']} speed law (r$^2$={fit['r_squared']:.4f})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, out_image)
    plt.close(fig)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("sweep_csv")
    ap.add_argument("fit_json")
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        render(args.sweep_csv, args.fit_json, args.out)
    except (SchemaError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
