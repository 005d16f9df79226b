"""Critical ratio nu_c = U_c/alpha by bisection, with the radius profile just below it.

    python3 scripts/critical_ratio.py --tol 1e-4
"""

import argparse

from polaron.binding import PTSolver, find_critical_ratio, radius_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--alphas", type=float, nargs="+", default=[1.0, 2.0])
    args = ap.parse_args()
    solver = PTSolver()
    lower = []
    for alpha in args.alphas:
        crit = find_critical_ratio(alpha, args.tol, solver)
        print(f"alpha={alpha:g}: nu_c={crit.nu_c:.6f}  U bracket [{crit.bracket[0]:.6f}, {crit.bracket[1]:.6f}]")
        lower.append(crit.bracket[0] / alpha)
    nu = lower[0]
    rows = radius_profile(1.0, [f * nu for f in (0.5, 0.9, 0.99, 0.999)], solver)
    print("\n   U/alpha   <1/r12>   FH rel error")
    for r in rows:
        print(f"{r.u:10.5f}  {r.inv_r12:8.5f}  {r.fh_rel_error:.1e}")


if __name__ == "__main__":
    main()
