#!/usr/bin/env python3
"""Grid-refinement study of the two Beltrami estimators on the radial extension.

For p = (1+kz)/(1-kz) the pair formula gives |mu| = k|zeta| exactly, so the
finite-difference estimator's distance from it measures pure discretization
error; it should shrink at first order or better under (t, theta) doubling.

Usage: python scripts/becker_dilatation_study.py [--k 0.5] [--out becker_study.csv]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from loewnerqc.grids import circle_grid
from loewnerqc.herglotz import HerglotzSpec, DenjoyWolffSpec, assemble_field
from loewnerqc import chains
from loewnerqc.extension import becker_extension, beltrami_formula
from loewnerqc.artifacts import write_table_csv


def study(k: float, n_cells: int, n_theta: int):
    p = HerglotzSpec.rational([1, k], [1, -k])
    fld = assemble_field(p, DenjoyWolffSpec.constant(0))
    g_fld = assemble_field(HerglotzSpec.constant(1), DenjoyWolffSpec.constant(0))
    grid = circle_grid((0.3, 0.6), 8)
    cps = np.linspace(0.0, 0.64, n_cells + 1)
    t0 = time.perf_counter()
    ff = chains.range_normalized_chain(fld, cps, grid, n_theta=n_theta,
                                       second_radius=False)
    gf = chains.decreasing_chain(g_fld, cps, grid, n_theta=n_theta,
                                 second_radius=False)
    ext = becker_extension(ff)
    fs = beltrami_formula(p, HerglotzSpec.constant(1), 0.0, cps, ff.theta,
                          ff.trace_radius, gf.traces, gf.trace_valid,
                          gf.trace_derivs)
    both = ext.fd_valid & fs.valid
    mu_f = float(np.nanmax(np.abs(fs.mu_pair[fs.valid])))
    mu_fd = float(np.nanmax(np.abs(ext.mu_fd[ext.fd_valid])))
    agree = float(np.abs(fs.mu[both] - ext.mu_fd[both]).max())
    return mu_f, mu_fd, agree, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=float, default=0.5)
    ap.add_argument("--out", type=str, default="becker_study.csv")
    args = ap.parse_args()

    rows = []
    prev = None
    for cells, ntheta in ((16, 64), (32, 128), (64, 256), (128, 512)):
        mu_f, mu_fd, agree, secs = study(args.k, cells, ntheta)
        order = np.log2(prev / agree) if prev else float("nan")
        prev = agree
        rows.append([cells, ntheta, mu_f, mu_fd, agree, order, secs * 1e3])
        print(f"{cells:4d} x {ntheta:4d}: |mu_f| {mu_f:.5f}  |mu_fd| {mu_fd:.5f}  "
              f"agreement {agree:.2e}  order {order:5.2f}  ({secs:.1f}s)")
    write_table_csv(["t_cells", "theta_nodes", "max_mu_formula", "max_mu_fd",
                     "agreement", "order_vs_previous", "runtime_ms"], rows, args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
