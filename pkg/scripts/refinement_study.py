"""Grid refinement of the Pekar constant and of the PT bipolaron binding energy.

    python3 scripts/refinement_study.py [--skip-bipolaron]
"""

import argparse
import time

from polaron.binding import PTSolver
from polaron.bipolaron import build_internal_grid
from polaron.pekar import pekar_constant
from polaron.radial import build_radial_grid

PEKAR_GRIDS = [(10.0, 1000), (20.0, 2000), (30.0, 3000), (40.0, 4000), (60.0, 6000)]
BIPOLARON_GRIDS = [(64, 16), (96, 8), (96, 16), (96, 24), (128, 16)]
NUS = (0.0, 1.0, 2.0)


def pekar_table():
    print("r_max      n      C_P          seconds")
    for r_max, n in PEKAR_GRIDS:
        t0 = time.perf_counter()
        cp = pekar_constant(build_radial_grid(r_max, n))
        print(f"{r_max:5.0f}  {n:5d}  {cp:.9f}  {time.perf_counter() - t0:6.1f}")


def bipolaron_table():
    print("\nn_r  n_u  " + "  ".join(f"delta_e(nu={nu:g})" for nu in NUS) + "  seconds")
    for n_r, n_u in BIPOLARON_GRIDS:
        t0 = time.perf_counter()
        solver = PTSolver(build_internal_grid(n_r=n_r, n_u=n_u))
        vals = [solver.report(1.0, nu).delta_e for nu in NUS]
        print(f"{n_r:3d}  {n_u:3d}  " + "  ".join(f"{v:16.8f}" for v in vals)
              + f"  {time.perf_counter() - t0:6.1f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--skip-bipolaron", action="store_true")
    args = ap.parse_args()
    pekar_table()
    if not args.skip_bipolaron:
        bipolaron_table()


if __name__ == "__main__":
    main()
