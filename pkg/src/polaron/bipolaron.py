"""Two-electron Pekar-Tomasevich functional on rotation-invariant states.

A state psi(x, y) that is invariant under simultaneous rotations depends only
on (r1, r2, u = cos theta_12).  We expand it in orthonormal Legendre
polynomials of u,

    psi(r1, r2, u) = sum_l c_l(r1, r2) P~_l(u),

and discretize each c_l on the FEDVR radial grid in both arguments.  In that
partial-wave basis the kinetic energy is diagonal in l (centrifugal term
l(l+1)/r^2 on each electron) and 1/r12 couples the waves through its
multipole expansion sum_k r_<^k / r_>^{k+1} P_k(u), evaluated exactly.

The working array ``X[l, i, j]`` holds sqrt(8 pi^2) sqrt(w_i w_j) r_i r_j c_l
at interior radial nodes, so that sum(X**2) is the L2 norm of psi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg

from .errors import InvalidArgument, NoConvergence
from .radial import (
    CouplingParams,
    RadialField,
    RadialGrid,
    build_radial_grid,
    coulomb_values,
    hartree_values,
)

log = logging.getLogger(__name__)

EIGHT_PI2 = 8.0 * np.pi**2
DEFAULT_NR = 96
DEFAULT_NU = 16
DEFAULT_R_MAX = 20.0
NORM_SLACK = 1e-6


@dataclass(frozen=True, eq=False)
class InternalGrid:
    radial: RadialGrid
    u_nodes: np.ndarray
    u_weights: np.ndarray

    @property
    def counts(self) -> tuple[int, int, int]:
        n = self.radial.n_points
        return n, n, len(self.u_nodes)

    @property
    def n_waves(self) -> int:
        return len(self.u_nodes)

    def __eq__(self, other):
        if not isinstance(other, InternalGrid):
            return NotImplemented
        return self.radial == other.radial and np.array_equal(self.u_nodes, other.u_nodes)

    def __hash__(self):
        return hash((self.radial, len(self.u_nodes)))

    def scaled(self, factor: float) -> InternalGrid:
        return InternalGrid(self.radial.scaled(factor), self.u_nodes, self.u_weights)

    @cached_property
    def legendre_table(self) -> np.ndarray:
        """P~_l(u_k), orthonormal on [-1, 1]; shape (L, n_u)."""
        L = self.n_waves
        table = legendre.legvander(self.u_nodes, L - 1).T
        return table * np.sqrt((2 * np.arange(L) + 1) / 2.0)[:, None]

    @cached_property
    def radial_scale(self) -> np.ndarray:
        """sqrt(w_i) r_i at interior nodes."""
        g = self.radial
        return np.sqrt(g.line_weights[:-1]) * g.interior

    @cached_property
    def centrifugal(self) -> np.ndarray:
        """l(l+1)/r^2 at interior nodes, shape (L, n)."""
        ell = np.arange(self.n_waves)
        return (ell * (ell + 1))[:, None] / self.radial.interior[None, :] ** 2

    @cached_property
    def repulsion_coupling(self) -> np.ndarray:
        """<l| 1/r12 |l'> at each radial pair, shape (L, L, n, n).

        Each multipole r_<^k / r_>^(k+1) comes from the inverse of the radial
        Poisson operator -d^2/dr^2 + k(k+1)/r^2 plus its boundary term, which
        treats the kink at r1 = r2 exactly within the basis.
        """
        L = self.n_waves
        kmax = 2 * L - 2
        # Gaunt-type integrals int P~_l P~_l' P_k du, exact by Gauss-Legendre
        xq, wq = legendre.leggauss(2 * L + 2)
        pl = legendre.legvander(xq, max(kmax, L - 1)).T
        pt = pl[:L] * np.sqrt((2 * np.arange(L) + 1) / 2.0)[:, None]
        gaunt = np.einsum("aq,bq,kq,q->abk", pt, pt, pl[: kmax + 1], wq)
        g = self.radial
        r = g.interior
        s = self.radial_scale
        K = g.kinetic_dense
        out = np.zeros((L, L, r.size, r.size))
        for k in range(kmax + 1):
            gk = gaunt[:, :, k]
            if not np.any(np.abs(gk) > 1e-14):
                continue
            inv = linalg.inv(K + np.diag(k * (k + 1) / r**2))
            vk = (2 * k + 1) * inv / np.outer(s, s)
            vk += np.outer(r**k, r**k) / g.r_max ** (2 * k + 1)
            vk = 0.5 * (vk + vk.T)
            out += gk[:, :, None, None] * vk[None, None]
        return out


def build_internal_grid(r_max: float = DEFAULT_R_MAX, n_r: int = DEFAULT_NR,
                        n_u: int = DEFAULT_NU) -> InternalGrid:
    if n_u < 1:
        raise InvalidArgument("need at least one angular node")
    x, w = legendre.leggauss(n_u)
    return InternalGrid(build_radial_grid(r_max, n_r), x, w)


@dataclass(frozen=True, eq=False)
class BipolaronState:
    """Exchange-symmetric psi(r1, r2, u) at (radial node, radial node, angular node)."""

    grid: InternalGrid
    values: np.ndarray
    symmetric: bool = True
    eigenvalue: float | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.counts:
            raise InvalidArgument(f"state has shape {vals.shape}, grid needs {self.grid.counts}")
        vals = 0.5 * (vals + vals.transpose(1, 0, 2))
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        g = self.grid
        w = g.radial.weights
        return EIGHT_PI2 * float(np.einsum("i,j,k,ijk->", w, w, g.u_weights, self.values**2))


def state_to_waves(state: BipolaronState) -> np.ndarray:
    g = state.grid
    c = np.einsum("lk,k,ijk->lij", g.legendre_table, g.u_weights, state.values[:-1, :-1])
    s = g.radial_scale
    return np.sqrt(EIGHT_PI2) * c * s[None, :, None] * s[None, None, :]


def waves_to_state(grid: InternalGrid, X: np.ndarray, eigenvalue=None) -> BipolaronState:
    s = grid.radial_scale
    c = X / (np.sqrt(EIGHT_PI2) * s[None, :, None] * s[None, None, :])
    n = grid.radial.n_points
    vals = np.zeros((n, n, grid.n_waves))
    vals[:-1, :-1] = np.einsum("lk,lij->ijk", grid.legendre_table, c)
    return BipolaronState(grid, vals, True, eigenvalue)


def product_state(grid: InternalGrid, phi: np.ndarray) -> BipolaronState:
    """phi(r1) phi(r2), normalized, from node values of a radial orbital."""
    n = grid.radial.n_points
    vals = np.broadcast_to((phi[:, None] * phi[None, :])[:, :, None], (n, n, grid.n_waves))
    st = BipolaronState(grid, vals.copy())
    return BipolaronState(grid, st.values / np.sqrt(st.norm()))


def _symmetrize(X):
    return 0.5 * (X + X.transpose(0, 2, 1))


# -- operators on the wave array ------------------------------------------------

def _density_nodes(grid: InternalGrid, X: np.ndarray) -> np.ndarray:
    g = grid.radial
    rho = np.zeros(g.n_points)
    rho[:-1] = np.einsum("lij->i", X * X) / (2.0 * np.pi * g.line_weights[:-1] * g.interior**2)
    return rho


def _kinetic(grid: InternalGrid, X: np.ndarray) -> float:
    G = grid.radial.gradient_matrix
    L, n, _ = X.shape
    flat = X.transpose(1, 0, 2).reshape(n, L * n)  # (i, l j)
    gi = G @ flat
    gj = G @ X.transpose(2, 0, 1).reshape(n, L * n)
    total = float(np.sum(gi * gi)) + float(np.sum(gj * gj))
    cent = grid.centrifugal
    total += float(np.sum((cent[:, :, None] + cent[:, None, :]) * X * X))
    return total


def _repulsion_apply(grid: InternalGrid, X: np.ndarray) -> np.ndarray:
    return np.einsum("abij,bij->aij", grid.repulsion_coupling, X, optimize=True)


def _one_body_apply(grid: InternalGrid, X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(K + l(l+1)/r^2 + v) on each electron; v at interior nodes."""
    g = grid.radial
    L, n, _ = X.shape
    flat = X.transpose(1, 0, 2).reshape(n, L * n)
    k1 = (g.kinetic_dense @ flat).reshape(n, L, n).transpose(1, 0, 2)
    diag = grid.centrifugal + v[None, :]
    out = k1 + k1.transpose(0, 2, 1)
    out += (diag[:, :, None] + diag[:, None, :]) * X
    return out


def _hamiltonian_apply(grid, X, v, u):
    out = _one_body_apply(grid, X, v)
    if u != 0.0:
        out += u * _repulsion_apply(grid, X)
    return out


def _energy_terms(grid: InternalGrid, X: np.ndarray):
    kin = _kinetic(grid, X)
    rep = float(np.sum(X * _repulsion_apply(grid, X)))
    rho = _density_nodes(grid, X)
    att = coulomb_values(grid.radial, rho, rho)
    return kin, rep, att, rho


def _check_state(state: BipolaronState):
    n = state.norm()
    if abs(n - 1.0) > NORM_SLACK:
        raise InvalidArgument(f"state is not normalized (norm {n:.3e})")


def density_from_state(state: BipolaronState) -> RadialField:
    _check_state(state)
    rho = _density_nodes(state.grid, state_to_waves(state))
    return RadialField(state.grid.radial, rho, "density", 2.0)


def pt_energy(state: BipolaronState, params: CouplingParams):
    """(energy, kinetic, repulsion_expect, attraction) of the two-electron functional."""
    if params.n_particles != 2:
        raise InvalidArgument("pt_energy needs n_particles = 2")
    _check_state(state)
    kin, rep, att, _ = _energy_terms(state.grid, state_to_waves(state))
    energy = kin + params.repulsion_u * rep - params.alpha * att
    return energy, kin, rep, att


def expectation_inv_r12(state: BipolaronState) -> float:
    _check_state(state)
    X = state_to_waves(state)
    return float(np.sum(X * _repulsion_apply(state.grid, X)))


# -- linear two-body ground state -----------------------------------------------

@dataclass
class InnerOptions:
    tol: float = 1e-7
    max_iter: int = 2000
    shift: float = 0.1


class _Preconditioner:
    """Exact inverse of the separable part sum_l (h_l (x) 1 + 1 (x) h_l), shifted."""

    def __init__(self, grid: InternalGrid, v: np.ndarray, shift: float):
        K = grid.radial.kinetic_dense
        self.q = []
        self.lam = []
        for cent in grid.centrifugal:
            lam, q = linalg.eigh(K + np.diag(cent + v))
            self.q.append(q)
            self.lam.append(lam)
        self.ground = 2.0 * self.lam[0][0]
        self.shift = shift * max(abs(self.ground), 1e-3)
        self.denom = [l[:, None] + l[None, :] - self.ground + self.shift for l in self.lam]

    def __call__(self, R: np.ndarray) -> np.ndarray:
        out = np.empty_like(R)
        for l, (q, d) in enumerate(zip(self.q, self.denom)):
            out[l] = q @ ((q.T @ R[l] @ q) / d) @ q.T
        return out

    def separable_ground(self, grid: InternalGrid) -> np.ndarray:
        X = np.zeros((grid.n_waves,) + self.q[0].shape)
        phi = self.q[0][:, 0]
        X[0] = np.outer(phi, phi)
        return X


def _lowest_eigen(grid, v, u, X0, opts: InnerOptions):
    """Block-size-one LOBPCG for the lowest symmetric eigenpair.

    Returns (X, eigenvalue, residual norm, iterations).
    """
    prec = _Preconditioner(grid, v, opts.shift)
    X = prec.separable_ground(grid) if X0 is None else _symmetrize(X0.copy())
    X /= np.linalg.norm(X)
    HX = _hamiltonian_apply(grid, X, v, u)
    P = HP = None
    theta = float(np.sum(X * HX))
    res = np.inf
    for it in range(opts.max_iter + 1):
        R = HX - theta * X
        res = float(np.linalg.norm(R))
        if res <= opts.tol:
            return X, theta, res, it
        if it == opts.max_iter:
            break
        W = _symmetrize(prec(R))
        basis = [X, W] + ([P] if P is not None else [])
        # orthonormalize against X (and each other) for a well-conditioned Ritz step
        ortho = [X]
        images = [HX]
        for B in basis[1:]:
            B = B.copy()
            for _ in range(2):
                for Q in ortho:
                    B -= np.sum(Q * B) * Q
            nb = np.linalg.norm(B)
            if nb < 1e-13:
                continue
            B /= nb
            ortho.append(B)
            images.append(_hamiltonian_apply(grid, B, v, u))
        m = len(ortho)
        A = np.array([[np.sum(ortho[a] * images[b]) for b in range(m)] for a in range(m)])
        A = 0.5 * (A + A.T)
        vals, vecs = linalg.eigh(A)
        c = vecs[:, 0]
        if c[0] < 0:
            c = -c
        Xn = sum(ci * Bi for ci, Bi in zip(c, ortho))
        HXn = sum(ci * Hi for ci, Hi in zip(c, images))
        P = sum(ci * Bi for ci, Bi in zip(c[1:], ortho[1:]))
        HP = sum(ci * Hi for ci, Hi in zip(c[1:], images[1:]))
        nx = np.linalg.norm(Xn)
        X, HX = Xn / nx, HXn / nx
        theta = float(vals[0])
    raise NoConvergence(
        f"two-body eigensolver stalled at residual {res:.3e}",
        diagnostics={"residual": res, "iterations": opts.max_iter},
        partial=X,
    )


def inner_ground_state(potential: RadialField, u_repulsion: float, grid: InternalGrid,
                       opts: InnerOptions | None = None, start: BipolaronState | None = None
                       ) -> BipolaronState:
    """Lowest symmetric eigenstate of -Lap_x - Lap_y + V(x) + V(y) + U/|x-y|."""
    if potential.grid != grid.radial:
        raise InvalidArgument("potential must live on the internal grid's radial grid")
    v = potential.values[:-1]
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("potential must be finite on the grid")
    X0 = state_to_waves(start) if start is not None else None
    X, theta, _, _ = _lowest_eigen(grid, v, u_repulsion, X0, opts or InnerOptions())
    return waves_to_state(grid, X, eigenvalue=theta)


# -- self-consistent field ------------------------------------------------------

@dataclass
class ScfOptions:
    tol: float = 1e-8
    max_iter: int = 500
    mixing: float = 1.0
    min_mixing: float = 1e-3
    inner: InnerOptions = field(default_factory=InnerOptions)
    seed: int | None = None  # random smooth start instead of the product of Pekar orbitals
    init: BipolaronState | None = None  # start state on the scaled grid


@dataclass
class BipolaronResult:
    params: CouplingParams
    energy: float
    kinetic: float
    repulsion_expect: float
    attraction: float
    density: RadialField
    state: BipolaronState
    scf_iterations: int
    scf_residual: float
    history: list[float] = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def inv_r12(self) -> float:
        return self.repulsion_expect


def default_internal_grid() -> InternalGrid:
    return build_internal_grid()


def _random_start(grid: InternalGrid, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    r = grid.radial.interior
    X = np.zeros((grid.n_waves, r.size, r.size))
    for _ in range(3):
        a, b = rng.uniform(0.5, 4.0, size=2)
        f1 = np.exp(-a * r) * (1 + rng.uniform(0, 1) * r)
        f2 = np.exp(-b * r)
        X[0] += rng.uniform(0.2, 1.0) * (np.outer(f1, f2) + np.outer(f2, f1))
    s = grid.radial_scale
    X *= s[None, :, None] * s[None, None, :]
    X[1] += 0.1 * rng.standard_normal() * X[0]
    X = _symmetrize(X)
    return X / np.linalg.norm(X)


def _pekar_product_start(grid: InternalGrid) -> np.ndarray:
    from .pekar import PekarOptions, solve_pekar
    # beta = 2 minimizer at alpha = 1; reuse the internal radial grid scaled by 2
    res = solve_pekar(2.0, grid.radial.scaled(2.0), PekarOptions(tol=1e-6))
    st = product_state(grid, res.psi.values)
    return state_to_waves(st)


def _scf(grid: InternalGrid, u: float, opts: ScfOptions):
    """SCF at alpha = 1 with repulsion ``u`` on ``grid``."""
    if opts.init is not None:
        X = state_to_waves(opts.init)
    elif opts.seed is not None:
        X = _random_start(grid, opts.seed)
    else:
        X = _pekar_product_start(grid)
    X /= np.linalg.norm(X)
    kin, rep, att, rho = _energy_terms(grid, X)
    energy = kin + u * rep - att
    history = [energy]
    mixing = opts.mixing
    base_in = base_out = rho  # densities of the last accepted step
    rho_in = rho
    residual = np.inf
    for it in range(1, opts.max_iter + 1):
        v = -2.0 * hartree_values(grid.radial, rho_in)[:-1]
        # loose inner solves while the density is still far from self-consistent
        inner = InnerOptions(
            tol=max(opts.inner.tol, min(1e-3, 1e-2 * residual)),
            max_iter=opts.inner.max_iter,
            shift=opts.inner.shift,
        )
        Xn, _, _, _ = _lowest_eigen(grid, v, u, X, inner)
        kin_n, rep_n, att_n, rho_out = _energy_terms(grid, Xn)
        e_n = kin_n + u * rep_n - att_n
        if e_n > energy + 1e-10 * max(1.0, abs(energy)):
            mixing *= 0.5
            if mixing < opts.min_mixing:
                raise NoConvergence(
                    "SCF energy keeps rising; oscillation detected, try a smaller mixing",
                    diagnostics={"iterations": it, "residual": residual, "mixing": mixing},
                )
            rho_in = (1.0 - mixing) * base_in + mixing * base_out
            continue
        residual = float(np.max(np.abs(rho_out - rho_in)))
        X, energy, kin, rep, att = Xn, e_n, kin_n, rep_n, att_n
        history.append(energy)
        if residual <= opts.tol and inner.tol <= opts.inner.tol:
            return X, energy, kin, rep, att, rho_out, it, residual, history
        base_in, base_out = rho_in, rho_out
        rho_in = (1.0 - mixing) * base_in + mixing * base_out
    raise NoConvergence(
        f"SCF did not converge: density change {residual:.3e} after {opts.max_iter} iterations",
        diagnostics={"iterations": opts.max_iter, "residual": residual, "mixing": mixing},
    )


def scf_minimize(params: CouplingParams, grid: InternalGrid | None = None,
                 opts: ScfOptions | None = None) -> BipolaronResult:
    """Minimize the bipolaron functional over rotation-invariant symmetric states.

    ``grid`` is read in units where alpha = 1; the returned state and density
    live on it dilated by 1/alpha.
    """
    if params.n_particles != 2:
        raise InvalidArgument("scf_minimize needs n_particles = 2")
    grid = grid or default_internal_grid()
    opts = opts or ScfOptions()
    a = params.alpha
    u = params.repulsion_u / a
    X, e, kin, rep, att, rho, it, res, hist = _scf(grid, u, opts)

    phys = grid.scaled(1.0 / a)
    state_s = waves_to_state(grid, X)
    state = BipolaronState(phys, a**3 * state_s.values)
    density = RadialField(phys.radial, a**3 * _density_nodes(grid, X), "density", 2.0)
    return BipolaronResult(
        params=params,
        energy=a * a * e,
        kinetic=a * a * kin,
        repulsion_expect=a * rep,
        attraction=a * att,
        density=density,
        state=state,
        scf_iterations=it,
        scf_residual=a**3 * res,
        history=[a * a * h for h in hist],
        meta={
            "ansatz": "rotation-invariant psi(r1, r2, cos theta12); upper bound, "
                      "not exact near the unbinding point",
            "n_r": grid.radial.n_points,
            "n_u": grid.n_waves,
            "r_max_scaled": grid.radial.r_max,
        },
    )
