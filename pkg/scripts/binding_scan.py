"""PT binding energy over a U/alpha ladder, written as CSV.

    python3 scripts/binding_scan.py --alpha 1 --nu-max 3 --steps 31 --out scan.csv
"""

import argparse

import numpy as np

from polaron.binding import PTSolver, eps_bind, scan_binding, write_scan_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--nu-max", type=float, default=3.0)
    ap.add_argument("--steps", type=int, default=31)
    ap.add_argument("--out", default="scan.csv")
    args = ap.parse_args()
    us = args.alpha * np.linspace(0.0, args.nu_max, args.steps)
    scan = scan_binding(args.alpha, us, PTSolver())
    write_scan_csv(args.out, scan.rows)
    print("    U/alpha   delta_e/alpha^2   <1/r12>/alpha  bound")
    for r in scan.rows:
        print(f"{r.u / args.alpha:10.4f}  {r.delta_e / args.alpha**2:16.8f}  {r.inv_r12 / args.alpha:14.6f}"
              f"  {r.delta_e > eps_bind(args.alpha)}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
