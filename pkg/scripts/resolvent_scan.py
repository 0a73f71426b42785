#!/usr/bin/env python3
"""Scan sup-norm resolvents of the twisted operators over frequencies.

Usage: python scripts/resolvent_scan.py [--gamma 0.5] [--kmax 8] [--omegas 256]
"""

import argparse
import sys

from towerlab.cocycles import cocycle_from_records
from towerlab.inducing import build_scheme
from towerlab.interval_maps import make_lsv
from towerlab.operators import (
    UlamGrid,
    UlamPieceFactory,
    resolvent_diagnostic,
    resolvent_growth_fit,
)
from towerlab.reporting import write_csv


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--eps", type=float, default=0.3)
    ap.add_argument("--kmax", type=int, default=8)
    ap.add_argument("--omegas", type=int, default=256)
    ap.add_argument("--m", type=int, default=128)
    ap.add_argument("--out", default="resolvent_scan.csv")
    args = ap.parse_args(argv)
    scheme = build_scheme(make_lsv(args.gamma), phi_max=1024)
    h = cocycle_from_records([(0, 1, args.eps, 0.0)])
    factory = UlamPieceFactory(
        scheme, h, UlamGrid(scheme.y_lo, scheme.y_hi, args.m), phi_max=1024
    )
    rows, scans = [], []
    for k in range(1, args.kmax + 1):
        scan = resolvent_diagnostic(factory.twisted_set((k,)), omega_count=args.omegas)
        scans.append(scan)
        print(f"k={k}: sup={scan.sup:10.4f} at omega={scan.argmax_omega:.4f} "
              f"singular={scan.singular}")
        for om, nr in zip(scan.omegas, scan.norms):
            rows.append((k, om, nr))
    if args.kmax >= 8:
        fit = resolvent_growth_fit(scans)
        print(f"growth fit: xi_hat={fit.slope:.3f} (r2={fit.r2:.3f})")
    write_csv(args.out, ["k", "omega", "norm"], rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
