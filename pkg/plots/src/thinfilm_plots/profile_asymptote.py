"""Near-contact profile against the receding log-corrected asymptote.

Usage: thinfilm-plot-profile-asymptote PROFILE_CSV --sdot S --out FIG.svg
The overlay (3 sdot)^(1/3) xi (ln 1/xi)^(1/3) uses the measured speed passed
on the command line; nothing is re-fit from the data.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .schema import SchemaError, new_figure, read_profile_blocks, save_figure


def render(profile_csv, sdot, out_image, window=(1e-5, 0.5)):
    blocks = read_profile_blocks(profile_csv)
    t, xi, h = blocks[-1]
    m = (xi > window[0]) & (xi < min(window[1], 0.999))
    if not m.any():
        raise SchemaError(f"{profile_csv}: no samples inside the plot window")
    ref = (3.0 * sdot) ** (1.0 / 3.0) * xi[m] * np.log(1.0 / xi[m]) ** (1.0 / 3.0)

    plt = new_figure()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.loglog(xi[m], h[m], "-", color="#1f5fa8", label=f"profile at t={t:g}")
    ax.loglog(xi[m], ref, "--", color="#b03a2e",
              label=r"$(3\dot{s})^{1/3}\,\xi\,(\ln 1/\xi)^{1/3}$")
    ax.set_xlabel(r"distance to contact point $\xi$")
    ax.set_ylabel(r"height $h$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, out_image)
    plt.close(fig)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("profile_csv")
    ap.add_argument("--sdot", type=float, required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        render(args.profile_csv, args.sdot, args.out)
    except (SchemaError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
