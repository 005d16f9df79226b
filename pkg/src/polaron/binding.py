"""Binding energies, break-up energies and the critical repulsion ratio.

Pekar-Tomasevich (PT) energies obey an exact scaling: E^(N)(alpha, U) =
alpha^2 E^(N)(1, U/alpha).  All PT work below is therefore done at alpha = 1
on the internal grid and multiplied back, so delta_e / alpha^2 and nu_c are
exactly alpha-independent up to rounding.

The radial bipolaron ansatz cannot describe two polarons far apart.  Since a
pair of distant Pekar minimizers is admissible in the PT functional and has
energy 2 e1 in the limit, the reported PT bipolaron energy is
min(e2_radial, 2 e1); the radial value is kept alongside.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bipolaron import (
    BipolaronResult,
    BipolaronState,
    InternalGrid,
    ScfOptions,
    default_internal_grid,
    scf_minimize,
)
from .errors import BracketFailure, InvalidArgument, UnsupportedN
from .pekar import PekarOptions, solve_pekar
from .radial import CouplingParams

log = logging.getLogger(__name__)

EPS_BIND = 1e-4  # unbinding threshold in units of alpha^2
SUBADDITIVITY_TOL = 1e-6
NU_LOW, NU_HIGH = 2.0, 10.0
C_P_QUOTED = 0.109

CSV_COLUMNS = ["alpha", "U", "method", "e1", "e2", "delta_e", "inv_r12", "unbound_flag", "stderr_e2"]


def eps_bind(alpha: float) -> float:
    return EPS_BIND * alpha * alpha


@dataclass
class BindingReport:
    alpha: float
    u: float
    e1: float
    e2: float
    delta_e: float
    breakup: float
    inv_r12: float
    method: str  # "PT" or "PIMC"
    unbound: bool
    e2_radial: float | None = None  # PT only: energy of the centered radial state
    stderr_e1: float | None = None
    stderr_e2: float | None = None
    stderr_delta: float | None = None

    def csv_row(self) -> dict:
        return {
            "alpha": f"{self.alpha:.12g}",
            "U": f"{self.u:.12g}",
            "method": self.method,
            "e1": f"{self.e1:.12g}",
            "e2": f"{self.e2:.12g}",
            "delta_e": f"{self.delta_e:.12g}",
            "inv_r12": f"{self.inv_r12:.12g}",
            "unbound_flag": int(self.unbound),
            "stderr_e2": "" if self.stderr_e2 is None else f"{self.stderr_e2:.6g}",
        }


@dataclass
class ScanResult:
    alpha: float
    rows: list[BindingReport]
    nu_c: float | None = None
    bracket: tuple[float, float] | None = None
    tolerance: float | None = None

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.u)

    def monotone(self, tol: float = SUBADDITIVITY_TOL) -> bool:
        d = [r.delta_e for r in self.rows]
        return all(b <= a + tol for a, b in zip(d, d[1:]))


def _scaled_state(result: BipolaronResult, grid: InternalGrid) -> BipolaronState:
    """The result's state expressed on the alpha = 1 grid."""
    a = result.params.alpha
    return BipolaronState(grid, result.state.values / a**3)


class PTSolver:
    """Caches PT single- and two-polaron solves on one internal grid.

    Everything is computed at alpha = 1 and keyed by U/alpha; the single
    polaron uses the bipolaron's radial grid so grid errors cancel in delta_e.
    """

    def __init__(self, grid: InternalGrid | None = None, scf: ScfOptions | None = None,
                 pekar: PekarOptions | None = None):
        self.grid = grid or default_internal_grid()
        self.scf = scf or ScfOptions()
        self.pekar = pekar or PekarOptions()
        self._e1: float | None = None
        self._pairs: dict[float, BipolaronResult] = {}

    @property
    def e1_unit(self) -> float:
        if self._e1 is None:
            self._e1 = solve_pekar(1.0, self.grid.radial, self.pekar).energy
        return self._e1

    def pair_unit(self, nu: float, start: BipolaronState | None = None) -> BipolaronResult:
        key = float(nu)
        if key not in self._pairs:
            opts = ScfOptions(**{**asdict_shallow(self.scf), "init": start})
            self._pairs[key] = scf_minimize(CouplingParams(1.0, key, 2), self.grid, opts)
        return self._pairs[key]

    def report(self, alpha: float, u: float) -> BindingReport:
        if not (alpha > 0 and np.isfinite(alpha)):
            raise InvalidArgument("alpha must be positive")
        if u < 0:
            raise InvalidArgument("U must be nonnegative")
        a2 = alpha * alpha
        e1 = a2 * self.e1_unit
        res = self.pair_unit(u / alpha)
        e2_rad = a2 * res.energy
        e2 = min(e2_rad, 2.0 * e1)
        delta = 2.0 * e1 - e2
        return BindingReport(
            alpha=alpha, u=u, e1=e1, e2=e2, delta_e=delta, breakup=2.0 * e1,
            inv_r12=alpha * res.inv_r12, method="PT", unbound=bool(delta <= eps_bind(alpha)),
            e2_radial=e2_rad,
        )


def asdict_shallow(obj) -> dict:
    return {f: getattr(obj, f) for f in obj.__dataclass_fields__}


_default_solver: PTSolver | None = None


def _solver(solver: PTSolver | None) -> PTSolver:
    global _default_solver
    if solver is not None:
        return solver
    if _default_solver is None:
        _default_solver = PTSolver()
    return _default_solver


def binding_energy(alpha: float, u: float, method: str = "PT", solver: PTSolver | None = None,
                   pimc_opts: dict | None = None) -> BindingReport:
    """Binding energy delta_e = 2 e1 - e2 at coupling alpha and repulsion U."""
    method = method.upper()
    if method == "PT":
        return _solver(solver).report(alpha, u)
    if method == "PIMC":
        from .pimc import estimate_energy
        kw = dict(pimc_opts or {})
        one = estimate_energy(alpha, 0.0, 1, **kw)
        two = estimate_energy(alpha, u, 2, **kw)
        delta = 2.0 * one.energy - two.energy
        err = math.hypot(2.0 * one.stderr, two.stderr)
        return BindingReport(
            alpha=alpha, u=u, e1=one.energy, e2=two.energy, delta_e=delta,
            breakup=2.0 * one.energy, inv_r12=float("nan"), method="PIMC",
            unbound=bool(delta <= eps_bind(alpha) + 2 * err),
            stderr_e1=one.stderr, stderr_e2=two.stderr, stderr_delta=err,
        )
    raise InvalidArgument(f"unknown method {method!r}")


def breakup_energy(e1: float, e2: float | None = None, n: int = 2) -> float:
    """Least energy of splitting n polarons into two clusters, min_k E(k) + E(n-k)."""
    if n == 2:
        return 2.0 * e1
    if n == 3:
        if e2 is None:
            raise InvalidArgument("N = 3 break-up needs the two-polaron energy")
        return e1 + e2
    if n >= 4:
        raise UnsupportedN(f"break-up energy for N = {n} needs E(3), which is not computed")
    raise InvalidArgument("N must be at least 2")


def breakup_from_reports(report: BindingReport, n: int = 2) -> float:
    return breakup_energy(report.e1, report.e2, n)


def scan_binding(alpha: float, u_values, solver: PTSolver | None = None) -> ScanResult:
    s = _solver(solver)
    return ScanResult(alpha, [s.report(alpha, float(u)) for u in u_values])


def find_critical_ratio(alpha: float, tol: float = 0.01, solver: PTSolver | None = None,
                        nu_low: float = NU_LOW, nu_high: float = NU_HIGH) -> ScanResult:
    """Bisect U/alpha for the end of binding, delta_e <= 1e-4 alpha^2.

    delta_e is nonincreasing in U (dE2/dU = <1/r12> >= 0, e1 does not depend
    on U), so the predicate "bound" flips once.
    """
    if not (alpha > 0 and np.isfinite(alpha)):
        raise InvalidArgument("alpha must be positive")
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    s = _solver(solver)
    rows = []

    def bound(nu):
        rep = s.report(alpha, nu * alpha)
        rows.append(rep)
        return not rep.unbound

    lo, hi = nu_low, nu_high
    if bound(hi):
        raise BracketFailure(
            f"still bound at U = {hi} alpha; critical ratio lies above the bracket",
            diagnostics={"alpha": alpha, "delta_e": rows[-1].delta_e, "nu": hi},
        )
    if not bound(lo):
        raise BracketFailure(
            f"already unbound at U = {lo} alpha",
            diagnostics={"alpha": alpha, "delta_e": rows[-1].delta_e, "nu": lo},
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bound(mid):
            lo = mid
        else:
            hi = mid
    nu_c = 0.5 * (lo + hi)
    log.info("alpha=%g nu_c=%.6f bracket [%.6f, %.6f]", alpha, nu_c, lo, hi)
    return ScanResult(alpha, rows, nu_c=nu_c, bracket=(lo * alpha, hi * alpha), tolerance=tol)


@dataclass
class RadiusRow:
    u: float
    inv_r12: float
    delta_e: float
    unbound: bool
    fh_derivative: float | None = None  # (E(U+h) - E(U-h)) / 2h of the radial branch
    fh_rel_error: float | None = None


def radius_profile(alpha: float, u_list, solver: PTSolver | None = None,
                   fh_step: float | None = 1e-3) -> list[RadiusRow]:
    """<1/r12> and delta_e along U, with a Feynman-Hellmann check on bound rows.

    ``fh_step`` is h / alpha; None skips the finite-difference check.
    """
    s = _solver(solver)
    rows = []
    for u in sorted(float(x) for x in u_list):
        rep = s.report(alpha, u)
        row = RadiusRow(u, rep.inv_r12, rep.delta_e, rep.unbound)
        if fh_step is not None and not rep.unbound:
            nu = u / alpha
            start = _scaled_state(s.pair_unit(nu), s.grid)
            lo_nu = max(nu - fh_step, 0.0)
            e_hi = s.pair_unit(nu + fh_step, start).energy
            e_lo = s.pair_unit(lo_nu, start).energy
            deriv = alpha * (e_hi - e_lo) / (nu + fh_step - lo_nu)  # dE/dU = alpha d(E1)/d(nu)
            row.fh_derivative = deriv
            row.fh_rel_error = abs(deriv - rep.inv_r12) / abs(rep.inv_r12)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# verification


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, detail):
        self.checks.append(Check(name, bool(passed), detail))


@dataclass
class VerificationInputs:
    pimc_single: list = field(default_factory=list)  # PimcEstimate with n_particles = 1
    pt_single: dict = field(default_factory=dict)  # alpha -> PT single-polaron energy
    rows: list[BindingReport] = field(default_factory=list)
    nu_c: float | None = None
    c_p: float = C_P_QUOTED


def verify_bounds(inputs: VerificationInputs) -> VerificationReport:
    """Check the rigorous inequalities on whatever results are supplied.

    (a) weak-coupling bracket for PIMC, (b) Pekar value and PIMC <= PT,
    (c) subadditivity per row, (d) no binding well above the critical ratio,
    plus delta_e monotone in U and nonnegative.
    """
    rep = VerificationReport()
    for est in inputs.pimc_single:
        a, e, s = est.alpha, est.energy, est.stderr
        if a <= 0.5:
            lo, hi = -a - a * a / 3.0, -a
            ok = lo - 2 * s <= e <= hi + 2 * s
            rep.add(f"(a) bracket alpha={a:g}", ok, f"E={e:.5f}+-{s:.5f} in [{lo:.5f}, {hi:.5f}]")
        else:
            ok = e <= -a + 2 * s
            rep.add(f"(a) upper bound alpha={a:g}", ok, f"E={e:.5f}+-{s:.5f} <= {-a:.5f}")
    for a, e_pt in sorted(inputs.pt_single.items()):
        target = -inputs.c_p * a * a
        rel = abs(e_pt - target) / abs(target)
        rep.add(f"(b) Pekar alpha={a:g}", rel <= 0.01, f"E_PT={e_pt:.6f} vs {target:.6f} (rel {rel:.2e})")
        for est in inputs.pimc_single:
            if math.isclose(est.alpha, a):
                ok = est.energy <= e_pt + 2 * est.stderr
                rep.add(f"(b) PIMC <= PT alpha={a:g}", ok,
                        f"{est.energy:.5f}+-{est.stderr:.5f} <= {e_pt:.5f}")
    for r in inputs.rows:
        ok = r.e2 <= 2 * r.e1 + SUBADDITIVITY_TOL
        rep.add(f"(c) subadditivity alpha={r.alpha:g} U={r.u:g}", ok,
                f"e2={r.e2:.8f} 2e1={2 * r.e1:.8f}")
        rep.add(f"nonnegative delta_e alpha={r.alpha:g} U={r.u:g}", r.delta_e >= -SUBADDITIVITY_TOL,
                f"delta_e={r.delta_e:.3e}")
    if inputs.nu_c is not None:
        for r in inputs.rows:
            if r.u >= 1.1 * inputs.nu_c * r.alpha:
                ok = abs(r.delta_e) <= eps_bind(r.alpha)
                rep.add(f"(d) unbound alpha={r.alpha:g} U={r.u:g}", ok,
                        f"|delta_e|={abs(r.delta_e):.3e} <= {eps_bind(r.alpha):.1e}")
    by_alpha: dict[float, list[BindingReport]] = {}
    for r in inputs.rows:
        by_alpha.setdefault(r.alpha, []).append(r)
    for a, rs in sorted(by_alpha.items()):
        rs = sorted(rs, key=lambda r: r.u)
        bad = [(x.u, y.u) for x, y in zip(rs, rs[1:]) if y.delta_e > x.delta_e + SUBADDITIVITY_TOL]
        rep.add(f"monotone delta_e alpha={a:g}", not bad, f"violations at {bad}" if bad else f"{len(rs)} rows")
    return rep


def write_scan_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r.csv_row())
