"""Path-integral Monte Carlo for the Fröhlich polaron and bipolaron.

Imaginary-time paths x_i(t), t in [0, T), are discretized on M slices with
periodic wrap.  The sampled weight is

    exp(-S_kin + alpha * A[x] - U * C[x] - v * sum_k dt |x_k|^2)

with S_kin = sum_k |x_{k+1} - x_k|^2 / (4 dt) (free generator -Delta),

    A = 1/2 sum_{i,j} sum_{(i,k) != (j,l)} dt^2 e^{-d_kl} / max(|x_i(k) - x_j(l)|, dt),
    C = sum_{i<j} sum_k dt / max(|x_i(k) - x_j(k)|, dt),

and d_kl = dt * min(|k - l|, M - |k - l|).  The ground energy follows from
dE/dalpha = -<A>/T integrated over a coupling schedule starting at 0.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np
from scipy import integrate, special

from .errors import InvalidArgument
from .stats import BlockingResult, block_means, blocking

log = logging.getLogger(__name__)

DEFAULT_PERIOD = 32.0
DEFAULT_SLICES = 512
DEFAULT_SWEEPS = 200_000
DEFAULT_POINTS = 8
BURN_IN = 0.25
N_BLOCKS = 32
TARGET_ACCEPT = (0.2, 0.6)
TUNE_EVERY = 50


# ---------------------------------------------------------------------------
# kernels
#
# pos has shape (n, 3, M); wmat[k, l] = dt^2 e^{-d_kl}; eps is the distance cap.


@nb.njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@nb.njit(cache=True, fastmath=True, error_model="numpy")
def _row(ax, ay, az, px, py, pz, wrow, buf, e2):
    """sum_l wrow[l] / max(|p - a_l|, eps); the capped inverses go to buf."""
    s = 0.0
    for l in range(ax.shape[0]):
        r2 = (px - ax[l]) ** 2 + (py - ay[l]) ** 2 + (pz - az[l]) ** 2
        r2 = r2 if r2 > e2 else e2
        q = 1.0 / np.sqrt(r2)
        buf[l] = q
        s += wrow[l] * q
    return s


@nb.njit(cache=True, fastmath=True)
def _potential_at(pos, wmat, i, k, px, py, pz, buf, e2):
    """sum over (j, l) != (i, k) of wmat[k, l] / max(|p - x_j(l)|, eps)."""
    n = pos.shape[0]
    s = 0.0
    for j in range(n):
        s += _row(pos[j, 0], pos[j, 1], pos[j, 2], px, py, pz, wmat[k], buf[j], e2)
    s -= wmat[k, k] * buf[i, k]
    buf[i, k] = 0.0
    return s


@nb.njit(cache=True, fastmath=True)
def _potentials(pos, wmat, e2):
    n, _, m = pos.shape
    phi = np.empty((n, m))
    buf = np.empty((n, m))
    for i in range(n):
        for k in range(m):
            phi[i, k] = _potential_at(pos, wmat, i, k, pos[i, 0, k], pos[i, 1, k], pos[i, 2, k], buf, e2)
    return phi


@nb.njit(cache=True, fastmath=True)
def _same_slice(pos, i, k, px, py, pz, eps):
    n = pos.shape[0]
    s = 0.0
    for j in range(n):
        if j == i:
            continue
        dx = px - pos[j, 0, k]
        dy = py - pos[j, 1, k]
        dz = pz - pos[j, 2, k]
        s += 1.0 / max(math.sqrt(dx * dx + dy * dy + dz * dz), eps)
    return s


@nb.njit(cache=True, fastmath=True)
def _cross(pos, i, j, sx, sy, sz, wmat, buf, e2):
    """sum_{k,l} wmat[k, l] / max(|x_i(k) + s - x_j(l)|, eps)."""
    m = pos.shape[2]
    s = 0.0
    for k in range(m):
        s += _row(pos[j, 0], pos[j, 1], pos[j, 2], pos[i, 0, k] + sx, pos[i, 1, k] + sy,
                  pos[i, 2, k] + sz, wmat[k], buf, e2)
    return s


@nb.njit(cache=True, fastmath=True)
def _coulomb_pair(pos, i, j, sx, sy, sz, eps):
    m = pos.shape[2]
    s = 0.0
    for k in range(m):
        dx = pos[i, 0, k] + sx - pos[j, 0, k]
        dy = pos[i, 1, k] + sy - pos[j, 1, k]
        dz = pos[i, 2, k] + sz - pos[j, 2, k]
        s += 1.0 / max(math.sqrt(dx * dx + dy * dy + dz * dz), eps)
    return s


@nb.njit(cache=True)
def _kernel_matrix(w):
    m = w.shape[0]
    wmat = np.empty((m, m))
    for k in range(m):
        for l in range(m):
            wmat[k, l] = w[(k - l) % m]
    return wmat


@nb.njit(cache=True, fastmath=True)
def _totals(pos, dt, wmat, eps):
    """(A, C, sum_k dt |x|^2) evaluated from scratch."""
    n, _, m = pos.shape
    phi = _potentials(pos, wmat, eps * eps)
    a = 0.5 * phi.sum()
    c = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            c += dt * _coulomb_pair(pos, i, j, 0.0, 0.0, 0.0, eps)
    q = 0.0
    for i in range(n):
        for k in range(m):
            q += pos[i, 0, k] ** 2 + pos[i, 1, k] ** 2 + pos[i, 2, k] ** 2
    return a, c, dt * q


@nb.njit(cache=True, fastmath=True)
def _segment_move(pos, phi, wmat, i, a, L, dt, eps, alpha, u, v, rows, seg_old, seg_pot):
    """Resample slices a+1 .. a+L-1 of particle i from the free bridge.

    The proposal is the exact conditional of the kinetic weight, so the
    acceptance only involves the interaction terms.  Returns (accepted,
    dA, dC, dQ).
    """
    n, _, m = pos.shape
    e2 = eps * eps
    nin = L - 1
    b = (a + L) % m
    for s in range(nin):
        k = (a + 1 + s) % m
        seg_old[0, s] = pos[i, 0, k]
        seg_old[1, s] = pos[i, 1, k]
        seg_old[2, s] = pos[i, 2, k]
    # old within-segment pairs, plus Coulomb and confinement terms
    inner_old = 0.0
    for s in range(nin):
        ks = (a + 1 + s) % m
        for t in range(s + 1, nin):
            kt = (a + 1 + t) % m
            r = math.sqrt((seg_old[0, s] - seg_old[0, t]) ** 2 + (seg_old[1, s] - seg_old[1, t]) ** 2
                          + (seg_old[2, s] - seg_old[2, t]) ** 2)
            inner_old += wmat[ks, kt] / max(r, eps)
    c_old = 0.0
    q_old = 0.0
    phi_old = 0.0
    for s in range(nin):
        k = (a + 1 + s) % m
        phi_old += phi[i, k]
        q_old += seg_old[0, s] ** 2 + seg_old[1, s] ** 2 + seg_old[2, s] ** 2
        if n > 1:
            c_old += _same_slice(pos, i, k, seg_old[0, s], seg_old[1, s], seg_old[2, s], eps)
    # Levy construction toward the fixed end point x_i(b)
    for s in range(nin):
        k = (a + 1 + s) % m
        kprev = (a + s) % m
        rem = L - s
        for c in range(3):
            mean = pos[i, c, kprev] + (pos[i, c, b] - pos[i, c, kprev]) / rem
            sd = math.sqrt(2.0 * dt * (rem - 1) / rem)
            pos[i, c, k] = mean + sd * np.random.standard_normal()
    inner_new = 0.0
    c_new = 0.0
    q_new = 0.0
    pot_new = 0.0
    for s in range(nin):
        k = (a + 1 + s) % m
        px = pos[i, 0, k]
        py = pos[i, 1, k]
        pz = pos[i, 2, k]
        seg_pot[s] = _potential_at(pos, wmat, i, k, px, py, pz, rows[s], e2)
        pot_new += seg_pot[s]
        q_new += px * px + py * py + pz * pz
        if n > 1:
            c_new += _same_slice(pos, i, k, px, py, pz, eps)
        for t in range(s + 1, nin):
            kt = (a + 1 + t) % m
            inner_new += wmat[k, kt] * rows[s, i, kt]
    d_a = (pot_new - inner_new) - (phi_old - inner_old)
    d_c = dt * (c_new - c_old)
    d_q = dt * (q_new - q_old)
    log_p = alpha * d_a - u * d_c - v * d_q
    if log_p >= 0.0 or np.random.random() < math.exp(log_p):
        # phi outside the segment: add new rows, remove old ones
        for s in range(nin):
            k = (a + 1 + s) % m
            for j in range(n):
                for l in range(m):
                    phi[j, l] += wmat[k, l] * rows[s, j, l]
        old = rows[0]  # reuse as scratch once its contribution is in
        for s in range(nin):
            k = (a + 1 + s) % m
            for j in range(n):
                for l in range(m):
                    r = math.sqrt((seg_old[0, s] - pos[j, 0, l]) ** 2 + (seg_old[1, s] - pos[j, 1, l]) ** 2
                                  + (seg_old[2, s] - pos[j, 2, l]) ** 2)
                    old[j, l] = 1.0 / max(r, eps)
            for j in range(n):
                for l in range(m):
                    phi[j, l] -= wmat[k, l] * old[j, l]
        # entries inside the segment were computed against the new segment
        for s in range(nin):
            k = (a + 1 + s) % m
            phi[i, k] = seg_pot[s]
        return True, d_a, d_c, d_q
    for s in range(nin):
        k = (a + 1 + s) % m
        pos[i, 0, k] = seg_old[0, s]
        pos[i, 1, k] = seg_old[1, s]
        pos[i, 2, k] = seg_old[2, s]
    return False, 0.0, 0.0, 0.0


@nb.njit(cache=True, fastmath=True)
def _chain(pos, n_sweeps, dt, wmat, eps, alpha, u, v, step, tstep, seg_len, tune,
           out_a, out_c, out_q, out_dx2, counts):
    """Run ``n_sweeps`` Metropolis sweeps in place.

    Each sweep visits every slice of every particle once in order, then
    proposes one rigid translation per particle, then free-bridge segment
    moves of ``seg_len`` slices covering about one period.  phi[i, k] holds the
    retarded potential felt by x_i(k), so a slice proposal costs one row of
    distances and an accepted one a second row to update phi.  Per-sweep
    observables are written to the out_* arrays; counts accumulates tries
    and accepts of slice, translation and segment moves.  With ``tune`` set
    the step sizes and segment length adapt every TUNE_EVERY sweeps.
    """
    n, _, m = pos.shape
    e2 = eps * eps
    a_tot, c_tot, q_tot = _totals(pos, dt, wmat, eps)
    phi = _potentials(pos, wmat, e2)
    new = np.empty((n, m))
    old = np.empty((n, m))
    inv4 = 0.25 / dt
    win = np.zeros(6, dtype=np.int64)
    l_max = m // 2
    rows = np.empty((l_max, n, m))
    seg_old = np.empty((3, l_max))
    seg_pot = np.empty(l_max)
    for sweep in range(n_sweeps):
        for i in range(n):
            for k in range(m):
                km = k - 1 if k > 0 else m - 1
                kp = k + 1 if k < m - 1 else 0
                ox = pos[i, 0, k]
                oy = pos[i, 1, k]
                oz = pos[i, 2, k]
                nx = ox + step * (2.0 * np.random.random() - 1.0)
                ny = oy + step * (2.0 * np.random.random() - 1.0)
                nz = oz + step * (2.0 * np.random.random() - 1.0)
                ex = pos[i, 0, km]
                ey = pos[i, 1, km]
                ez = pos[i, 2, km]
                fx = pos[i, 0, kp]
                fy = pos[i, 1, kp]
                fz = pos[i, 2, kp]
                d_kin = ((nx - ex) ** 2 + (ny - ey) ** 2 + (nz - ez) ** 2
                         + (fx - nx) ** 2 + (fy - ny) ** 2 + (fz - nz) ** 2
                         - (ox - ex) ** 2 - (oy - ey) ** 2 - (oz - ez) ** 2
                         - (fx - ox) ** 2 - (fy - oy) ** 2 - (fz - oz) ** 2) * inv4
                d_q = dt * (nx * nx + ny * ny + nz * nz - ox * ox - oy * oy - oz * oz)
                p_new = _potential_at(pos, wmat, i, k, nx, ny, nz, new, e2)
                d_a = p_new - phi[i, k]
                d_c = 0.0
                if n > 1:
                    d_c = dt * (_same_slice(pos, i, k, nx, ny, nz, eps)
                                - _same_slice(pos, i, k, ox, oy, oz, eps))
                log_p = -d_kin + alpha * d_a - u * d_c - v * d_q
                win[0] += 1
                if log_p >= 0.0 or np.random.random() < math.exp(log_p):
                    _potential_at(pos, wmat, i, k, ox, oy, oz, old, e2)
                    for j in range(n):
                        for l in range(m):
                            phi[j, l] += wmat[k, l] * (new[j, l] - old[j, l])
                    phi[i, k] = p_new
                    pos[i, 0, k] = nx
                    pos[i, 1, k] = ny
                    pos[i, 2, k] = nz
                    a_tot += d_a
                    c_tot += d_c
                    q_tot += d_q
                    win[1] += 1
        for i in range(n):
            sx = tstep * (2.0 * np.random.random() - 1.0)
            sy = tstep * (2.0 * np.random.random() - 1.0)
            sz = tstep * (2.0 * np.random.random() - 1.0)
            d_q = 0.0
            for k in range(m):
                d_q += ((pos[i, 0, k] + sx) ** 2 + (pos[i, 1, k] + sy) ** 2
                        + (pos[i, 2, k] + sz) ** 2
                        - pos[i, 0, k] ** 2 - pos[i, 1, k] ** 2 - pos[i, 2, k] ** 2)
            d_q *= dt
            d_a = 0.0
            d_c = 0.0
            for j in range(n):
                if j == i:
                    continue
                d_a += (_cross(pos, i, j, sx, sy, sz, wmat, new[0], e2)
                        - _cross(pos, i, j, 0.0, 0.0, 0.0, wmat, new[0], e2))
                d_c += dt * (_coulomb_pair(pos, i, j, sx, sy, sz, eps)
                             - _coulomb_pair(pos, i, j, 0.0, 0.0, 0.0, eps))
            log_p = alpha * d_a - u * d_c - v * d_q
            win[2] += 1
            if log_p >= 0.0 or np.random.random() < math.exp(log_p):
                for k in range(m):
                    pos[i, 0, k] += sx
                    pos[i, 1, k] += sy
                    pos[i, 2, k] += sz
                if n > 1:
                    phi = _potentials(pos, wmat, e2)
                a_tot += d_a
                c_tot += d_c
                q_tot += d_q
                win[3] += 1
        for i in range(n):
            for _ in range(max(1, m // seg_len)):
                a0 = np.random.randint(0, m)
                ok, d_a, d_c, d_q = _segment_move(pos, phi, wmat, i, a0, seg_len, dt, eps, alpha, u, v,
                                                  rows, seg_old, seg_pot)
                win[4] += 1
                if ok:
                    a_tot += d_a
                    c_tot += d_c
                    q_tot += d_q
                    win[5] += 1
        dx2 = 0.0
        for i in range(n):
            for k in range(m):
                kp = k + 1 if k < m - 1 else 0
                dx2 += ((pos[i, 0, kp] - pos[i, 0, k]) ** 2 + (pos[i, 1, kp] - pos[i, 1, k]) ** 2
                        + (pos[i, 2, kp] - pos[i, 2, k]) ** 2)
        out_a[sweep] = a_tot
        out_c[sweep] = c_tot
        out_q[sweep] = q_tot
        out_dx2[sweep] = dx2 / (n * m)
        if tune and (sweep + 1) % TUNE_EVERY == 0:
            acc = win[1] / win[0]
            if acc > 0.45:
                step *= 1.15
            elif acc < 0.35:
                step /= 1.15
            tacc = win[3] / win[2]
            if tacc > 0.45:
                tstep = min(tstep * 1.15, 1e3)
            elif tacc < 0.35:
                tstep /= 1.15
            sacc = win[5] / win[4]
            if sacc > 0.6 and seg_len < l_max // 2:
                seg_len = seg_len + 1 + seg_len // 4
            elif sacc < 0.3 and seg_len > 2:
                seg_len = max(2, seg_len - 1 - seg_len // 5)
            counts += win
            win[:] = 0
    counts += win
    return step, tstep, seg_len


# ---------------------------------------------------------------------------
# ensembles


def kernel_weights(n_slices: int, period: float) -> np.ndarray:
    """dt^2 e^{-d_m}, m = 0..M-1, with d_m the periodic time separation."""
    dt = period / n_slices
    m = np.arange(n_slices)
    return dt * dt * np.exp(-dt * np.minimum(m, n_slices - m))


def kernel_integral(n_slices: int, period: float) -> float:
    """Discrete analogue of int e^{-|t - s|} ds over one periodic window."""
    dt = period / n_slices
    return float(kernel_weights(n_slices, period).sum() / dt)


def _check_geometry(period, n_slices, strict=True):
    if not (np.isfinite(period) and period > 0):
        raise InvalidArgument("period must be positive")
    if n_slices < 8:
        raise InvalidArgument("need at least 8 slices")
    if strict:
        if period < 16:
            raise InvalidArgument(f"period T={period} below the minimum 16")
        if n_slices < 8 * period:
            raise InvalidArgument(f"{n_slices} slices is fewer than 8 per unit time at T={period}")


@dataclass
class PathEnsemble:
    n_slices: int
    period: float
    positions: np.ndarray  # (n_particles, M, 3)
    rng_seed: int = 0
    alpha: float = 0.0
    repulsion_u: float = 0.0
    external_v: float = 0.0
    statistics: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        _check_geometry(self.period, self.n_slices, strict=False)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 2:
            self.positions = self.positions[None]
        if self.positions.shape[1:] != (self.n_slices, 3):
            raise InvalidArgument(f"positions shape {self.positions.shape} does not match M={self.n_slices}")
        if self.positions.shape[0] not in (1, 2):
            raise InvalidArgument("PIMC supports one or two particles")

    @property
    def dt(self) -> float:
        return self.period / self.n_slices

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def _soa(self) -> np.ndarray:
        return np.ascontiguousarray(self.positions.transpose(0, 2, 1))


def free_bridge(n_slices: int, period: float, rng: np.random.Generator, n_particles: int = 1) -> np.ndarray:
    """Exact sample of periodic free paths (n_particles, M, 3), centered at the origin."""
    dt = period / n_slices
    steps = rng.normal(scale=math.sqrt(2 * dt), size=(n_particles, n_slices, 3))
    steps -= steps.mean(axis=1, keepdims=True)  # close the loop
    x = np.cumsum(steps, axis=1)
    return x - x.mean(axis=1, keepdims=True)


def action_terms(path: PathEnsemble) -> tuple[float, float]:
    """(A, C): retarded double sum and same-time repulsion sum."""
    wmat = _kernel_matrix(kernel_weights(path.n_slices, path.period))
    a, c, _ = _totals(path._soa(), path.dt, wmat, path.dt)
    return float(a), float(c)


def action_interaction(path: PathEnsemble, alpha: float | None = None, u: float | None = None) -> float:
    """alpha * A - U * C, the interaction exponent of the path weight.

    Coupling values default to those stored on the ensemble; with alpha = 1,
    U = 0 this is the bare retarded action A.
    """
    alpha = 1.0 if alpha is None else alpha
    u = path.repulsion_u if u is None else u
    a, c = action_terms(path)
    return alpha * a - u * c


# ---------------------------------------------------------------------------
# sampling


@dataclass
class ChainOptions:
    sweeps: int = DEFAULT_SWEEPS
    burn_in: float = BURN_IN
    n_blocks: int = N_BLOCKS
    step: float | None = None
    translation_step: float = 0.5
    segment: int | None = None  # initial segment length; default one time unit
    tune: bool = True
    strict: bool = True  # enforce T >= 16, M/T >= 8, sweeps >= 1000
    chunk: int = 2000


@dataclass
class ChainStats:
    """Per-sweep observables of one chain after burn-in."""

    action: np.ndarray  # A / T
    coulomb: np.ndarray  # C / T
    potential: np.ndarray  # sum_k dt |x|^2 / T
    step_sq: np.ndarray  # mean |x(t + dt) - x(t)|^2
    acceptance: float
    translation_acceptance: float
    segment_acceptance: float
    segment: int  # slices per free-bridge segment move
    step: float
    translation_step: float
    tuning_ok: bool
    seconds: float

    def blocked(self, name: str) -> BlockingResult:
        return blocking(getattr(self, name))

    def blocks(self, name: str, n_blocks: int = N_BLOCKS) -> np.ndarray:
        return block_means(getattr(self, name), n_blocks)


def sample_paths(alpha: float, u: float = 0.0, n_particles: int = 1, period: float = DEFAULT_PERIOD,
                 n_slices: int = DEFAULT_SLICES, sweeps: int | None = None, seed: int = 0,
                 external_v: float = 0.0, opts: ChainOptions | None = None,
                 start: np.ndarray | None = None) -> PathEnsemble:
    """Equilibrate and measure one Metropolis chain.

    The returned ensemble holds the final configuration; its ``statistics``
    entry ``"chain"`` is a :class:`ChainStats`.
    """
    opts = opts or ChainOptions()
    sweeps = opts.sweeps if sweeps is None else sweeps
    _check_geometry(period, n_slices, strict=opts.strict)
    if opts.strict and sweeps < 1000:
        raise InvalidArgument(f"sweeps={sweeps} below the minimum 1000")
    if sweeps < 2 * opts.n_blocks:
        raise InvalidArgument("too few sweeps for the requested blocks")
    if alpha < 0 or u < 0 or external_v < 0:
        raise InvalidArgument("alpha, U and v must be nonnegative")
    if n_particles not in (1, 2):
        raise InvalidArgument("PIMC supports one or two particles")

    dt = period / n_slices
    rng = np.random.default_rng(seed)
    if start is None:
        x = free_bridge(n_slices, period, rng, n_particles)
        if n_particles == 2:
            x[1] += np.array([1.0, 0.0, 0.0])
    else:
        x = np.array(start, dtype=float)
    pos = np.ascontiguousarray(x.transpose(0, 2, 1))
    _seed(int(rng.integers(2**31 - 1)))
    wmat = _kernel_matrix(kernel_weights(n_slices, period))
    step = opts.step if opts.step is not None else 1.6 * math.sqrt(dt)
    tstep = opts.translation_step

    n_burn = int(round(opts.burn_in * sweeps))
    n_meas = sweeps - n_burn
    scratch = np.empty((4, max(n_burn, 1)))
    counts = np.zeros(6, dtype=np.int64)
    seg_len = opts.segment if opts.segment is not None else max(2, min(n_slices // 4, round(1.0 / dt)))
    t0 = time.perf_counter()
    if n_burn:
        step, tstep, seg_len = _chain(pos, n_burn, dt, wmat, dt, alpha, u, external_v, step, tstep,
                                      seg_len, opts.tune,
                             scratch[0], scratch[1], scratch[2], scratch[3], counts)
    out = np.empty((4, n_meas))
    counts[:] = 0
    done = 0
    while done < n_meas:
        n = min(opts.chunk, n_meas - done)
        sl = slice(done, done + n)
        _chain(pos, n, dt, wmat, dt, alpha, u, external_v, step, tstep, seg_len, False,
               out[0, sl], out[1, sl], out[2, sl], out[3, sl], counts)
        done += n
    seconds = time.perf_counter() - t0
    acc = counts[1] / max(counts[0], 1)
    tacc = counts[3] / max(counts[2], 1)
    sacc = counts[5] / max(counts[4], 1)
    chain = ChainStats(
        action=out[0] / period,
        coulomb=out[1] / period,
        potential=out[2] / period,
        step_sq=out[3],
        acceptance=float(acc),
        translation_acceptance=float(tacc),
        segment_acceptance=float(sacc),
        segment=int(seg_len),
        step=float(step),
        translation_step=float(tstep),
        tuning_ok=bool(TARGET_ACCEPT[0] <= acc <= TARGET_ACCEPT[1]),
        seconds=seconds,
    )
    if not chain.tuning_ok:
        log.warning("slice acceptance %.3f outside %s", acc, TARGET_ACCEPT)
    ens = PathEnsemble(n_slices, period, pos.transpose(0, 2, 1).copy(), seed,
                       alpha=alpha, repulsion_u=u, external_v=external_v)
    ens.statistics = {
        "chain": chain,
        "block_action": chain.blocks("action", opts.n_blocks),
        "acceptance": chain.acceptance,
        "translation_acceptance": chain.translation_acceptance,
        "tuning_ok": chain.tuning_ok,
    }
    return ens


def lattice_oscillator_virial(n_slices: int, period: float, v: float, n_particles: int = 1) -> float:
    """Exact virial energy 2 v <|x|^2> of the discretized oscillator chain.

    The weight exp(-sum |dx|^2 / (4 dt) - v dt sum |x|^2) is Gaussian and
    diagonal in the Fourier modes of the closed path, with per-coordinate
    mode stiffness c_k = (1 - cos(2 pi k / M)) / (2 dt) + v dt.
    """
    dt = period / n_slices
    theta = 2.0 * np.pi * np.arange(n_slices) / n_slices
    c = (1.0 - np.cos(theta)) / (2.0 * dt) + v * dt
    x2 = np.mean(0.5 / c)
    return float(6.0 * v * x2 * n_particles)


def oscillator_energy(ens: PathEnsemble) -> dict:
    """Energy estimators of -Delta + v|x|^2 from a chain sampled with alpha = 0.

    "virial" is 2 <v |x|^2> shifted by the exact gap between the ground energy
    3 sqrt(v) per particle and the lattice chain value; "virial_lattice" is the
    unshifted sample mean.  "primitive" is the thermodynamic estimator.
    """
    chain: ChainStats = ens.statistics["chain"]
    v = ens.external_v
    n = ens.n_particles
    vir = blocking(2.0 * v * chain.potential)
    corr = 3.0 * math.sqrt(v) * n - lattice_oscillator_virial(ens.n_slices, ens.period, v, n)
    dt = ens.dt
    prim_series = 3.0 * n / (2.0 * dt) - n * chain.step_sq / (4.0 * dt * dt) + v * chain.potential
    prim = blocking(prim_series)
    return {"virial": vir.mean + corr, "virial_stderr": vir.stderr, "virial_lattice": vir.mean,
            "correction": corr, "primitive": prim.mean, "primitive_stderr": prim.stderr}


# ---------------------------------------------------------------------------
# thermodynamic integration


def _bridge_sigma(tau, period):
    return np.sqrt(2.0 * tau * (1.0 - tau / period))


def short_time_correction(n_slices: int, period: float) -> float:
    """Per-particle, per-unit-time gap between continuum and discretized free <A>.

    For free periodic paths the separation x(t) - x(s) is Gaussian with
    variance 2 tau (1 - tau/T) per coordinate, tau = |t - s|, on the lattice
    as in the continuum.  The continuum value is

        int_0^{T/2} e^{-tau} sqrt(2/pi) / sigma(tau) dtau,

    the lattice value replaces the integral by the slice sum with the
    diagonal removed and the 1/dt cap, E[min(1/R, 1/eps)] = erf(eps / (sqrt(2) sigma)) / eps.
    The leading O(sqrt(dt)) discretization error of <A>/T is universal
    (it comes from the short-time diffusive structure) and this difference
    removes it.
    """
    half = period / 2

    # tau = s^2 removes the 1/sqrt(tau) endpoint singularity
    def f(s):
        return 2.0 * math.exp(-s * s) / math.sqrt(math.pi * (1.0 - s * s / period))

    cont, _ = integrate.quad(f, 0.0, math.sqrt(half), epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(cont - free_action_density(n_slices, period))


def free_action_density(n_slices: int, period: float) -> float:
    """Exact <A>/T for one free periodic path on the lattice (alpha = 0)."""
    dt = period / n_slices
    m = np.arange(1, n_slices)
    sig = _bridge_sigma(m * dt, period)
    kern = np.exp(-dt * np.minimum(m, n_slices - m))
    return float(0.5 * np.sum(kern * special.erf(dt / (math.sqrt(2.0) * sig))))


def chebyshev_schedule(alpha: float, n_points: int = DEFAULT_POINTS) -> np.ndarray:
    k = np.arange(n_points)
    s = 0.5 * alpha * (1.0 - np.cos(np.pi * k / (n_points - 1)))
    s[0] = 0.0
    s[-1] = alpha
    return s


def clenshaw_curtis_weights(n_points: int) -> np.ndarray:
    """Weights on [0, 1] for the nodes of :func:`chebyshev_schedule`."""
    n = n_points - 1
    if n < 1:
        raise InvalidArgument("need at least two quadrature points")
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for j in range(1, n // 2):
            v -= 2.0 * np.cos(2 * j * theta[1:-1]) / (4 * j * j - 1)
        v -= np.cos(n * theta[1:-1]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for j in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * j * theta[1:-1]) / (4 * j * j - 1)
    w[1:-1] = 2.0 * v / n
    return 0.5 * w  # map [-1, 1] -> [0, 1]


def _schedule_weights(schedule: np.ndarray) -> tuple[np.ndarray, bool]:
    """Quadrature weights for integrating over the schedule; CC when it is the Chebyshev grid."""
    alpha = schedule[-1]
    n = len(schedule)
    if n >= 2 and np.allclose(schedule, chebyshev_schedule(alpha, n), rtol=1e-12, atol=1e-14):
        return alpha * clenshaw_curtis_weights(n), True
    return _trapezoid_weights(schedule), False


def _trapezoid_weights(schedule: np.ndarray) -> np.ndarray:
    h = np.diff(schedule)
    w = np.zeros(len(schedule))
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass
class PimcEstimate:
    alpha: float
    repulsion_u: float
    n_particles: int
    energy: float
    stderr: float
    schedule: list[float]
    weights: list[float]
    integrand: list[float]  # <A>/T + short-time correction at each schedule point
    integrand_err: list[float]
    raw_action: list[float]  # <A>/T as sampled
    correction: float  # added to every integrand value (all particles)
    quadrature_error: float
    period: float
    n_slices: int
    sweeps: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_error(self) -> float:
        return math.hypot(self.stderr, self.quadrature_error)

    @property
    def insufficient_statistics(self) -> bool:
        return bool(self.diagnostics.get("insufficient_statistics", False))

    def partial_energies(self) -> np.ndarray:
        """Cumulative trapezoid energy along the schedule (nonincreasing when all integrands >= 0)."""
        s = np.asarray(self.schedule)
        f = np.asarray(self.integrand)
        return -np.concatenate([[0.0], np.cumsum(0.5 * np.diff(s) * (f[1:] + f[:-1]))])


def _point_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


def _run_point(job) -> dict:
    a_k, u, n_particles, period, n_slices, sweeps, seed, opts = job
    ens = sample_paths(a_k, u, n_particles, period, n_slices, sweeps, seed, opts=opts)
    ch: ChainStats = ens.statistics["chain"]
    b = ch.blocked("action")
    log.info("alpha'=%.4f <A>/T=%.6f +- %.6f acc=%.3f seg=%d tau=%.1f (%.1fs)",
             a_k, b.mean, b.stderr, ch.acceptance, ch.segment, b.tau_int, ch.seconds)
    return {"mean": b.mean, "stderr": b.stderr, "tau_int": b.tau_int, "plateau": b.plateau,
            "acceptance": ch.acceptance, "tuning_ok": ch.tuning_ok, "seconds": ch.seconds,
            "blocks": ens.statistics["block_action"]}


def estimate_energy(alpha: float, u: float = 0.0, n_particles: int = 1, schedule=None,
                    period: float = DEFAULT_PERIOD, n_slices: int = DEFAULT_SLICES,
                    sweeps: int = DEFAULT_SWEEPS, seed: int = 0, opts: ChainOptions | None = None,
                    trace_path=None, correct_short_time: bool = True, workers: int = 1) -> PimcEstimate:
    """Ground energy by coupling-constant integration, E(alpha) = -int_0^alpha <A>/T.

    ``sweeps`` is the total Metropolis budget, split evenly over the
    schedule points; each point is an independent chain with its own burn-in
    and seed, so results do not depend on ``workers``.
    """
    if not np.isfinite(alpha) or alpha < 0:
        raise InvalidArgument("alpha must be nonnegative")
    if u < 0:
        raise InvalidArgument("U must be nonnegative")
    opts = opts or ChainOptions()
    _check_geometry(period, n_slices, strict=opts.strict)
    if alpha == 0:
        return PimcEstimate(0.0, u, n_particles, 0.0, 0.0, [0.0], [0.0], [], [], [], 0.0, 0.0,
                            period, n_slices, 0, seed, {"exact": "free particles"})
    sched = chebyshev_schedule(alpha) if schedule is None else np.asarray(schedule, dtype=float)
    if sched[0] != 0.0 or not np.all(np.diff(sched) > 0) or not math.isclose(sched[-1], alpha):
        raise InvalidArgument("schedule must increase strictly from 0 to alpha")
    n_pts = len(sched)
    per_point = sweeps // n_pts
    if opts.strict and per_point < 1000:
        raise InvalidArgument(f"{sweeps} sweeps over {n_pts} points leaves fewer than 1000 per point")

    corr = n_particles * short_time_correction(n_slices, period) if correct_short_time else 0.0
    jobs = [(float(a_k), u, n_particles, period, n_slices, per_point, s_k, opts)
            for a_k, s_k in zip(sched, _point_seeds(seed, n_pts))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_pts)) as pool:
            points = list(pool.map(_run_point, jobs))
    else:
        points = [_run_point(j) for j in jobs]
    raw = [p["mean"] for p in points]
    err = [p["stderr"] for p in points]
    tau = [p["tau_int"] for p in points]
    plateau = [p["plateau"] for p in points]
    acc = [p["acceptance"] for p in points]
    tuned = [p["tuning_ok"] for p in points]
    secs = [p["seconds"] for p in points]
    traces = [p["blocks"] for p in points]

    f = np.asarray(raw) + corr
    ferr = np.asarray(err)
    w, cc = _schedule_weights(sched)
    energy = -float(w @ f)
    stat = float(np.sqrt(np.sum((w * ferr) ** 2)))
    quad = abs(energy + float(_trapezoid_weights(sched) @ f)) if cc else 0.0
    monotone_a = bool(np.all(np.diff(raw) >= -2 * np.hypot(ferr[1:], ferr[:-1])))
    diag = {
        "acceptance": acc,
        "tau_int": tau,
        "plateau": plateau,
        "tuning_ok": all(tuned),
        "insufficient_statistics": not all(plateau),
        "action_nondecreasing": monotone_a,
        "seconds": secs,
        "sweeps_per_point": per_point,
        "quadrature": "clenshaw-curtis" if cc else "trapezoid",
    }
    est = PimcEstimate(
        alpha=float(alpha), repulsion_u=float(u), n_particles=n_particles,
        energy=energy, stderr=stat, schedule=[float(s) for s in sched],
        weights=[float(x) for x in w], integrand=[float(x) for x in f],
        integrand_err=[float(x) for x in ferr], raw_action=[float(x) for x in raw],
        correction=float(corr), quadrature_error=float(quad), period=period,
        n_slices=n_slices, sweeps=sweeps, seed=seed, diagnostics=diag,
    )
    if trace_path is not None:
        write_block_trace(trace_path, sched, traces)
    return est


def write_block_trace(path, schedule, traces):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["alpha_point", "block", "action_per_time"])
        for a_k, blocks in zip(schedule, traces):
            for b, val in enumerate(blocks):
                wr.writerow([f"{a_k:.12g}", b, f"{val:.12g}"])


def cross_validate_with_pt(estimate: PimcEstimate, pt_energy: float) -> dict:
    """Check the variational ordering E_pimc <= E_PT + 2 stderr."""
    margin = pt_energy + 2.0 * estimate.stderr - estimate.energy
    return {"alpha": estimate.alpha, "u": estimate.repulsion_u, "n": estimate.n_particles,
            "pimc": estimate.energy, "stderr": estimate.stderr, "pt": pt_energy,
            "margin": margin, "passed": bool(margin >= 0)}
