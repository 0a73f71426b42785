#!/usr/bin/env python3
"""Sweep the neutral exponent and fit return-time tails.

Usage: python scripts/tail_scan.py [--phi-max 4096] [--out tails_scan.csv]
"""

import argparse
import sys

from towerlab.inducing import build_scheme, fit_tail_exponent, tail_distribution
from towerlab.interval_maps import make_lsv
from towerlab.reporting import write_csv


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--phi-max", type=int, default=4096)
    ap.add_argument("--out", default="tails_scan.csv")
    ap.add_argument("--gammas", default="0.3,0.5,0.8,1.0,1.2,1.5")
    args = ap.parse_args(argv)
    rows = []
    for gamma in [float(g) for g in args.gammas.split(",")]:
        scheme = build_scheme(make_lsv(gamma), phi_max=args.phi_max)
        tail = tail_distribution(scheme, args.phi_max)
        fit = fit_tail_exponent(tail, (8, 512))
        rows.append((gamma, 1.0 / gamma, fit.beta_hat, fit.c_hat, fit.r2))
        print(
            f"gamma={gamma:4.2f}  beta=1/gamma={1/gamma:6.3f}  "
            f"beta_hat={fit.beta_hat:6.3f}  r2={fit.r2:.5f}"
        )
    write_csv(args.out, ["gamma", "beta", "beta_hat", "c_hat", "r2"], rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
