"""Single-polaron strong-coupling functional

    E[psi] = int |grad psi|^2 - beta * D(psi^2, psi^2),   ||psi||_2 = 1,

minimized over radial psi by preconditioned projected gradient descent.

All work happens in units where beta = 1 ("scaled units"); the grid handed to
:func:`solve_pekar` is read in those units and results are mapped back with
the exact dilation psi_beta(r) = beta^{3/2} psi_1(beta r), E(beta) = beta^2 E(1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidArgument, NoConvergence
from .radial import (
    RadialField,
    RadialGrid,
    build_radial_grid,
    field_from_function,
    from_dvr,
    hartree_values,
    normalize,
    to_dvr,
)

log = logging.getLogger(__name__)

DEFAULT_R_MAX = 20.0
DEFAULT_N_POINTS = 2000
NORM_SLACK = 1e-6


def default_grid() -> RadialGrid:
    return build_radial_grid(DEFAULT_R_MAX, DEFAULT_N_POINTS)


@dataclass
class PekarOptions:
    tol: float = 1e-8
    max_iter: int = 50_000
    initial_step: float = 1.0
    shift: float = 1.0  # preconditioner (K + shift)^-1, scaled units
    init: np.ndarray | None = None  # node values of a starting psi on the scaled grid
    seed: int | None = None  # random smooth start instead of e^-r


@dataclass
class PekarResult:
    beta: float
    energy: float
    kinetic: float
    attraction: float
    chemical_potential: float
    psi: RadialField
    residual: float
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)
    converged: bool = True

    @property
    def grid(self) -> RadialGrid:
        return self.psi.grid


def _check_normalized(psi: RadialField):
    if psi.kind != "wavefunction":
        raise InvalidArgument("expected a wavefunction")
    n = psi.norm()
    if abs(n - 1.0) > NORM_SLACK:
        raise InvalidArgument(f"wavefunction is not normalized (norm {n:.3e})")


def _terms(grid: RadialGrid, x: np.ndarray):
    """(kinetic, attraction, hartree potential at interior nodes) for DVR vector x."""
    psi = from_dvr(grid, x)
    v = hartree_values(grid, psi**2)[:-1]
    kin = grid.kinetic_energy(x)
    att = float(np.dot(x * x, v))
    return kin, att, v


def pekar_energy(psi: RadialField, beta: float):
    """(energy, kinetic, attraction) of a normalized radial wavefunction."""
    _check_normalized(psi)
    if beta < 0:
        raise InvalidArgument("beta must be nonnegative")
    kin, att, _ = _terms(psi.grid, to_dvr(psi.grid, psi.values))
    return kin - beta * att, kin, att


def pekar_gradient(psi: RadialField, beta: float) -> np.ndarray:
    """Gradient of the energy with respect to the DVR coefficients of psi.

    Equals 2 (K - 2 beta V[psi^2]) x; project onto the tangent space of the
    unit sphere before comparing with constrained finite differences.
    """
    x = to_dvr(psi.grid, psi.values)
    _, _, v = _terms(psi.grid, x)
    return 2.0 * (psi.grid.kinetic_matvec(x) - 2.0 * beta * v * x)


def _initial_vector(grid: RadialGrid, opts: PekarOptions) -> np.ndarray:
    if opts.init is not None:
        vals = np.asarray(opts.init, dtype=float)
    elif opts.seed is not None:
        rng = np.random.default_rng(opts.seed)
        widths = rng.uniform(0.3, 3.0, size=3)
        amps = rng.uniform(0.2, 1.0, size=3)
        r = grid.nodes
        vals = sum(a * np.exp(-r / w) * (1.0 + 0.3 * rng.standard_normal() * r / w) ** 2
                   for a, w in zip(amps, widths))
    else:
        vals = np.exp(-grid.nodes)
    x = to_dvr(grid, vals)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise InvalidArgument("initial wavefunction vanishes")
    return x / nrm


def _minimize(grid: RadialGrid, opts: PekarOptions, tol: float):
    """Projected preconditioned descent at beta = 1 on ``grid``.

    Returns (x, energy, kinetic, attraction, mu, residual, iterations, history, converged).
    """
    pre = grid.kinetic_banded.copy()
    pre[-1] += opts.shift
    chol = linalg.cholesky_banded(pre)

    def evaluate(x):
        kin, att, v = _terms(grid, x)
        hx = grid.kinetic_matvec(x) - 2.0 * v * x
        mu = float(x @ hx)
        r = hx - mu * x
        return kin, att, mu, r

    x = _initial_vector(grid, opts)
    kin, att, mu, r = evaluate(x)
    energy = kin - att
    res = float(np.linalg.norm(r))
    history = [energy]
    step = opts.initial_step
    for it in range(opts.max_iter + 1):
        if res <= tol:
            return x, energy, kin, att, mu, res, it, history, True
        if it == opts.max_iter:
            break
        # energy differences below this are rounding noise
        slack = 1e-14 * max(abs(energy), kin)
        d = linalg.cho_solve_banded((chol, False), r)
        d -= (x @ d) * x
        while True:
            trial = x - step * d
            trial /= np.linalg.norm(trial)
            t_kin, t_att, t_mu, t_r = evaluate(trial)
            t_energy = t_kin - t_att
            t_res = float(np.linalg.norm(t_r))
            if t_energy < energy - slack or (t_energy <= energy + slack and t_res < res):
                break
            step *= 0.5
            if step < 1e-14:
                return x, energy, kin, att, mu, res, it, history, False
        x, kin, att, mu, r, res, energy = trial, t_kin, t_att, t_mu, t_r, t_res, t_energy
        history.append(energy)
        step = min(step * 1.5, 4.0)
    return x, energy, kin, att, mu, res, opts.max_iter, history, False


def solve_pekar(beta: float = 1.0, grid: RadialGrid | None = None,
                opts: PekarOptions | None = None) -> PekarResult:
    """Minimize the Pekar functional with attraction coefficient ``beta``.

    ``grid`` is in scaled units (the beta = 1 problem); the returned ``psi``
    lives on that grid dilated by 1/beta.
    """
    if not np.isfinite(beta) or beta <= 0:
        raise InvalidArgument(f"beta must be positive, got {beta}")
    grid = grid or default_grid()
    opts = opts or PekarOptions()
    tol_scaled = opts.tol / beta**2
    x, e, kin, att, mu, res, it, hist, ok = _minimize(grid, opts, tol_scaled)

    phys = grid.scaled(1.0 / beta)
    psi = RadialField(phys, beta**1.5 * from_dvr(grid, x))
    b2 = beta**2
    result = PekarResult(
        beta=beta,
        energy=b2 * e,
        kinetic=b2 * kin,
        attraction=beta * att,
        chemical_potential=b2 * mu,
        psi=psi,
        residual=b2 * res,
        iterations=it,
        history=[b2 * h for h in hist],
        converged=ok,
    )
    log.debug("pekar beta=%g E=%.12f res=%.2e it=%d", beta, result.energy, result.residual, it)
    if not ok:
        raise NoConvergence(
            f"Pekar descent stopped at residual {result.residual:.3e} after {it} iterations",
            diagnostics={"residual": result.residual, "iterations": it, "tol": opts.tol},
            partial=result,
        )
    return result


def pekar_constant(grid: RadialGrid | None = None, opts: PekarOptions | None = None) -> float:
    return -solve_pekar(1.0, grid, opts).energy


def trial_library(grid: RadialGrid) -> list[RadialField]:
    """Ten normalized analytic trial states: five Gaussians, five exponentials."""
    trials = []
    for a in (0.05, 0.1, 0.2, 0.4, 0.8):
        trials.append(field_from_function(grid, lambda r, a=a: np.exp(-0.5 * a * r**2)))
    for k in (0.3, 0.5, 0.7, 1.0, 1.5):
        trials.append(field_from_function(grid, lambda r, k=k: (1 + k * r) * np.exp(-k * r)))
    return [normalize(t) for t in trials]
