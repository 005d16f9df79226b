"""Radial grids, fields and Coulomb integrals for spherically symmetric problems.

The grid is a finite-element discrete variable representation (FEDVR): the
interval [0, r_max] is cut into equal elements, each carrying Gauss-Lobatto-
Legendre nodes.  The node at r = 0 is dropped (every radial function we
represent is finite there and ``u = r * psi`` vanishes), the node at r_max is
kept for quadrature but wavefunctions are pinned to zero on it.

Units follow ``p**2 = -Laplacian``: no factor 1/2 anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg, sparse

from .errors import DegenerateInput, GridMismatch, InvalidArgument

FOUR_PI = 4.0 * np.pi
DEFAULT_ORDER = 16


@dataclass(frozen=True)
class CouplingParams:
    alpha: float
    repulsion_u: float = 0.0
    n_particles: int = 1

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise InvalidArgument(f"alpha must be positive, got {self.alpha}")
        if not np.isfinite(self.repulsion_u) or self.repulsion_u < 0:
            raise InvalidArgument(f"repulsion_u must be nonnegative, got {self.repulsion_u}")
        if self.n_particles not in (1, 2, 3):
            raise InvalidArgument(f"n_particles must be 1, 2 or 3, got {self.n_particles}")


def gll_rule(order: int):
    """Gauss-Lobatto-Legendre nodes, weights and differentiation matrix on [-1, 1].

    ``order`` is the polynomial degree, so there are ``order + 1`` nodes.
    ``deriv[i, j]`` is the derivative of the j-th Lagrange polynomial at node i.
    """
    p = order
    inner = legendre.Legendre.basis(p).deriv().roots()
    x = np.concatenate(([-1.0], np.sort(inner.real), [1.0]))
    pp = legendre.legval(x, np.eye(p + 1)[p])
    w = 2.0 / (p * (p + 1) * pp**2)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    deriv = pp[:, None] / (pp[None, :] * diff)
    np.fill_diagonal(deriv, 0.0)
    deriv[0, 0] = -p * (p + 1) / 4.0
    deriv[p, p] = p * (p + 1) / 4.0
    return x, w, deriv


def _element_orders(n_points: int, target: int = DEFAULT_ORDER) -> list[int]:
    n_el = -(-n_points // target)
    base, extra = divmod(n_points, n_el)
    return [base + 1] * extra + [base] * (n_el - extra)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """FEDVR grid on (0, r_max].

    ``weights`` integrate f(r) r**2 dr; ``line_weights`` integrate f(r) dr.
    ``orders`` lists the polynomial degree of each element, ``edges`` the
    element boundaries.
    """

    r_max: float
    n_points: int
    nodes: np.ndarray
    weights: np.ndarray
    line_weights: np.ndarray
    edges: np.ndarray
    orders: tuple[int, ...]
    stiffness: np.ndarray = field(repr=False)  # banded upper form, interior nodes

    def __eq__(self, other):
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return (
            self.r_max == other.r_max
            and self.n_points == other.n_points
            and np.array_equal(self.nodes, other.nodes)
        )

    def __hash__(self):
        return hash((self.r_max, self.n_points))

    @property
    def n_interior(self) -> int:
        """Number of nodes carrying wavefunction degrees of freedom (all but r_max)."""
        return self.n_points - 1

    @property
    def bandwidth(self) -> int:
        return self.stiffness.shape[0] - 1

    @cached_property
    def interior(self) -> np.ndarray:
        return self.nodes[:-1]

    @cached_property
    def _stiffness_cholesky(self):
        return linalg.cholesky_banded(self.stiffness)

    @cached_property
    def kinetic_banded(self) -> np.ndarray:
        """-d^2/dr^2 (Dirichlet at both ends) in the weight-scaled DVR basis, banded."""
        s = 1.0 / np.sqrt(self.line_weights[:-1])
        kb = self.stiffness.copy()
        u = self.bandwidth
        n = self.n_interior
        for d in range(u + 1):
            # row u - d holds element (j - d, j)
            j = np.arange(d, n)
            kb[u - d, d:] *= s[j - d] * s[j]
        return kb

    @cached_property
    def kinetic_dense(self) -> np.ndarray:
        return banded_to_dense(self.kinetic_banded)

    @cached_property
    def gradient_matrix(self) -> sparse.csr_matrix:
        """G with G.T @ G equal to the scaled kinetic matrix.

        Rows are element quadrature points; ``|G @ x|**2`` evaluates the kinetic
        energy as a sum of squares, free of the cancellation in ``x @ K @ x``.
        """
        rows, cols, vals = [], [], []
        scale = 1.0 / np.sqrt(self.line_weights[:-1])
        row0 = 0
        start = 0  # global index of the element's first node, r = 0 being global 0
        for e, p in enumerate(self.orders):
            _, wq, d = gll_rule(p)
            h = self.edges[e + 1] - self.edges[e]
            for q in range(p + 1):
                for m in range(p + 1):
                    g = start + m - 1  # interior index
                    if g < 0 or g >= self.n_interior:
                        continue
                    rows.append(row0 + q)
                    cols.append(g)
                    vals.append(np.sqrt(0.5 * h * wq[q]) * (2.0 / h) * d[q, m] * scale[g])
            row0 += p + 1
            start += p
        return sparse.csr_matrix((vals, (rows, cols)), shape=(row0, self.n_interior))

    def kinetic_energy(self, x: np.ndarray) -> float:
        """x @ K @ x computed as a sum of squares."""
        gx = self.gradient_matrix @ x
        return float(np.sum(gx * gx))

    def kinetic_matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply the scaled kinetic matrix along axis 0 of ``x``."""
        return banded_matvec(self.kinetic_banded, x)

    def scaled(self, factor: float) -> RadialGrid:
        """The same grid with every length multiplied by ``factor``."""
        if factor <= 0:
            raise InvalidArgument("scale factor must be positive")
        return RadialGrid(
            r_max=self.r_max * factor,
            n_points=self.n_points,
            nodes=self.nodes * factor,
            weights=self.weights * factor**3,
            line_weights=self.line_weights * factor,
            edges=self.edges * factor,
            orders=self.orders,
            stiffness=self.stiffness / factor,
        )

    def integrate(self, values: np.ndarray) -> float:
        """4 pi * integral of values(r) r^2 dr."""
        return FOUR_PI * float(np.dot(self.weights, values))

    def poisson_interior(self, source: np.ndarray) -> np.ndarray:
        """Solve stiffness @ y = source on interior nodes (y = 0 at 0 and r_max)."""
        return linalg.cho_solve_banded((self._stiffness_cholesky, False), source)


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    u = ab.shape[0] - 1
    n = ab.shape[1]
    out = np.zeros((n, n))
    for d in range(u + 1):
        vals = ab[u - d, d:]
        idx = np.arange(n - d)
        out[idx, idx + d] = vals
        out[idx + d, idx] = vals
    return out


def banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Symmetric banded (upper form) matrix times ``x`` along axis 0."""
    u = ab.shape[0] - 1
    n = ab.shape[1]
    x = np.asarray(x)
    y = ab[u][(slice(None),) + (None,) * (x.ndim - 1)] * x
    for d in range(1, u + 1):
        a = ab[u - d, d:][(slice(None),) + (None,) * (x.ndim - 1)]
        y[: n - d] += a * x[d:]
        y[d:] += a * x[: n - d]
    return y


def build_radial_grid(r_max: float, n_points: int) -> RadialGrid:
    """FEDVR grid with ``n_points`` nodes in (0, r_max].

    Elements have equal width and polynomial degree close to 16; the layout is
    a deterministic function of the two arguments.
    """
    if not np.isfinite(r_max) or r_max <= 0:
        raise InvalidArgument(f"r_max must be positive, got {r_max}")
    if int(n_points) != n_points or n_points < 16:
        raise InvalidArgument(f"n_points must be an integer >= 16, got {n_points}")
    n_points = int(n_points)
    orders = _element_orders(n_points)
    n_el = len(orders)
    edges = np.linspace(0.0, r_max, n_el + 1)

    n_global = n_points + 1  # including r = 0
    x_all = np.zeros(n_global)
    w_all = np.zeros(n_global)
    bw = max(orders)
    stiff = np.zeros((bw + 1, n_global))  # banded upper form over all global nodes
    start = 0
    for e, p in enumerate(orders):
        xi, wi, d = gll_rule(p)
        a, b = edges[e], edges[e + 1]
        h = b - a
        idx = start + np.arange(p + 1)
        x_all[idx] = a + 0.5 * h * (xi + 1.0)
        w_all[idx] += 0.5 * h * wi
        local = (2.0 / h) * (d.T * wi) @ d
        for m in range(p + 1):
            for n in range(m, p + 1):
                stiff[bw - (n - m), idx[n]] += local[m, n]
        start += p
    x_all[-1] = r_max
    nodes = x_all[1:]
    line_w = w_all[1:]
    # drop node 0 and node r_max from the stiffness (Dirichlet at both ends)
    inner = stiff[:, 1:-1].copy()
    # entries that coupled to the dropped node 0 sit in columns < bw - row offset; zero them
    for d in range(1, bw + 1):
        inner[bw - d, :d] = 0.0
    return RadialGrid(
        r_max=float(r_max),
        n_points=n_points,
        nodes=nodes,
        weights=line_w * nodes**2,
        line_weights=line_w,
        edges=edges,
        orders=tuple(orders),
        stiffness=inner,
    )


Kind = Literal["wavefunction", "density"]


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray
    kind: Kind = "wavefunction"
    norm_target: float = 1.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_points,):
            raise InvalidArgument(
                f"field has shape {vals.shape}, grid needs ({self.grid.n_points},)"
            )
        if self.kind not in ("wavefunction", "density"):
            raise InvalidArgument(f"unknown field kind {self.kind!r}")
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        """4 pi * integral of psi^2 r^2 dr for wavefunctions, of rho r^2 dr for densities."""
        if self.kind == "wavefunction":
            return self.grid.integrate(self.values**2)
        return self.grid.integrate(self.values)

    def density(self, occupation: float = 1.0) -> RadialField:
        if self.kind == "density":
            return self
        return RadialField(self.grid, occupation * self.values**2, "density", occupation)


def normalize(field: RadialField) -> RadialField:
    norm = field.norm()
    if not np.isfinite(norm) or norm <= np.finfo(float).tiny:
        raise DegenerateInput("cannot normalize a field with vanishing norm")
    if field.kind == "wavefunction":
        vals = field.values / np.sqrt(norm)
    else:
        if np.any(field.values < 0):
            raise InvalidArgument("density must be nonnegative")
        vals = field.values * (field.norm_target / norm)
    return RadialField(field.grid, vals, field.kind, field.norm_target)


def hartree_values(grid: RadialGrid, rho: np.ndarray) -> np.ndarray:
    """(rho * 1/|x|)(r) at every grid node for a radial density given as node values.

    Solves -(r V)'' = 4 pi r rho with r V(r_max) = total charge, which is the
    differential form of Newton's shell theorem.
    """
    q = grid.integrate(rho)
    r = grid.interior
    src = FOUR_PI * grid.line_weights[:-1] * r * rho[:-1]
    y = grid.poisson_interior(src)
    out = np.empty(grid.n_points)
    out[:-1] = y / r + q / grid.r_max
    out[-1] = q / grid.r_max
    return out


def radial_hartree_potential(density: RadialField) -> RadialField:
    if density.kind != "density":
        raise InvalidArgument("radial_hartree_potential needs a density field")
    v = hartree_values(density.grid, density.values)
    return RadialField(density.grid, v, "density", density.norm_target)


def coulomb_values(grid: RadialGrid, rho1: np.ndarray, rho2: np.ndarray) -> float:
    """D(rho1, rho2) for node-value densities on ``grid``."""
    return grid.integrate(rho1 * hartree_values(grid, rho2))


def coulomb_double_integral(rho1: RadialField, rho2: RadialField) -> float:
    if rho1.kind != "density" or rho2.kind != "density":
        raise InvalidArgument("coulomb_double_integral takes two densities")
    if rho1.grid != rho2.grid:
        raise GridMismatch("densities live on different grids")
    return coulomb_values(rho1.grid, rho1.values, rho2.values)


def field_from_function(grid: RadialGrid, func, kind: Kind = "wavefunction", norm_target=1.0):
    """Sample ``func`` on the grid; wavefunctions are pinned to zero at r_max."""
    vals = np.asarray(func(grid.nodes), dtype=float).copy()
    if kind == "wavefunction":
        vals[-1] = 0.0
    return RadialField(grid, vals, kind, norm_target)


def to_dvr(grid: RadialGrid, psi: np.ndarray) -> np.ndarray:
    """Node values of psi -> DVR coefficients x with sum(x**2) = 4 pi int psi^2 r^2 dr."""
    return np.sqrt(FOUR_PI * grid.line_weights[:-1]) * grid.interior * psi[:-1]


def from_dvr(grid: RadialGrid, x: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.n_points)
    out[:-1] = x / (np.sqrt(FOUR_PI * grid.line_weights[:-1]) * grid.interior)
    return out
