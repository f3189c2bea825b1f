"""Tail of the series density, untempered against polynomially tempered.

Writes tail_decay.csv (x, untempered, tempered, pbar) for x > 0 and prints
the fitted log-log slope on [5, 50].

    python3 demos/tail_decay.py [--out results/demos]
"""
import argparse
from pathlib import Path

import numpy as np

from tsparametrix import QProfile, SpaceGrid, Tempering, holder_coefficients, isotropic_stable, pbar, series


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/demos"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    c = holder_coefficients(1, 1.0, 0.5, 0.5, 0.0)
    g = SpaceGrid.line(0.0, 64.0, 512)
    cols = {}
    for label, temp in (("untempered", None), ("tempered", Tempering.polynomial(4))):
        m = isotropic_stable(1, 1.0, tempering=temp)
        st = series(m, c, 0.0, 1.0, g, filter_order=16)
        cols[label] = st.partial_sum.values
    ax = g.axes()[0]
    m = isotropic_stable(1, 1.0)
    cols["pbar"] = pbar(m, c, QProfile.for_model(m, c), 0.0, 1.0, 0.0, ax)
    sel = (ax >= 5) & (ax <= 50)
    slope = np.polyfit(np.log(ax[sel]), np.log(cols["untempered"][sel]), 1)[0]
    print("untempered slope on [5, 50]: %.3f" % slope)
    keep = ax > 0
    data = np.column_stack([ax[keep]] + [cols[k][keep] for k in ("untempered", "tempered", "pbar")])
    np.savetxt(args.out / "tail_decay.csv", data, delimiter=",", header="x,untempered,tempered,pbar",
               comments="", fmt="%.17g")


if __name__ == "__main__":
    main()
