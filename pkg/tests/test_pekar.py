import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from polaron.errors import InvalidArgument, NoConvergence
from polaron.pekar import (
    PekarOptions,
    pekar_constant,
    pekar_energy,
    pekar_gradient,
    solve_pekar,
    trial_library,
)
from polaron.radial import RadialField, build_radial_grid, field_from_function, from_dvr, normalize, to_dvr


def gaussian(grid, a):
    return normalize(field_from_function(grid, lambda r: oracles.gaussian_trial(r, a)))


# -- functional --------------------------------------------------------------------

def test_gaussian_trial_terms(grid):
    a = oracles.GAUSSIAN_TRIAL_WIDTH
    e, kin, att = pekar_energy(gaussian(grid, a), 1.0)
    k_ref, d_ref = oracles.gaussian_trial_terms(a)
    assert kin == pytest.approx(k_ref, rel=1e-6)
    assert att == pytest.approx(d_ref, rel=1e-6)
    assert e == pytest.approx(oracles.GAUSSIAN_TRIAL_ENERGY, rel=1e-6)


def test_gaussian_width_is_optimal(grid):
    # the closed-form optimum beats its neighbours on the grid too
    e0 = pekar_energy(gaussian(grid, oracles.GAUSSIAN_TRIAL_WIDTH), 1.0)[0]
    for f in (0.9, 1.1):
        assert pekar_energy(gaussian(grid, f * oracles.GAUSSIAN_TRIAL_WIDTH), 1.0)[0] > e0


def test_zero_coupling_is_kinetic(grid):
    psi = gaussian(grid, 0.5)
    e, kin, _ = pekar_energy(psi, 0.0)
    assert e == kin and kin > 0


def test_unnormalized_rejected(grid):
    psi = field_from_function(grid, lambda r: 2 * np.exp(-r))
    with pytest.raises(InvalidArgument):
        pekar_energy(psi, 1.0)


@given(st.floats(0.5, 2.0))
def test_dilation_scaling(lam):
    g = build_radial_grid(40.0, 800)
    base = normalize(field_from_function(g, lambda r: np.exp(-0.25 * r * r)))
    dil = normalize(field_from_function(g, lambda r: np.exp(-0.25 * (lam * r) ** 2)))
    _, k0, a0 = pekar_energy(base, 1.0)
    _, k1, a1 = pekar_energy(dil, 1.0)
    assert k1 == pytest.approx(lam**2 * k0, rel=1e-7)
    assert a1 == pytest.approx(lam * a0, rel=1e-7)


def test_gradient_matches_finite_differences(small_grid):
    rng = np.random.default_rng(3)
    g = small_grid
    psi = normalize(field_from_function(g, lambda r: (1 + 0.3 * r + 0.05 * r * r) * np.exp(-0.6 * r)))
    x = to_dvr(g, psi.values)
    grad = pekar_gradient(psi, 1.0)
    h = 1e-4
    for _ in range(5):
        d = rng.standard_normal(x.size) * np.exp(-0.2 * g.interior)
        d -= np.dot(d, x) * x
        d /= np.linalg.norm(d)
        ep = pekar_energy(RadialField(g, from_dvr(g, x + h * d)), 1.0)[0]
        em = pekar_energy(RadialField(g, from_dvr(g, x - h * d)), 1.0)[0]
        fd = (ep - em) / (2 * h)
        assert np.dot(grad, d) == pytest.approx(fd, rel=1e-5)


# -- solver ----------------------------------------------------------------------

def test_pekar_constant_quoted_digits(pekar1):
    assert -pekar1.energy == pytest.approx(oracles.C_P_QUOTED, rel=0.01)


def test_pekar_constant_regression(pekar1):
    # frozen six-digit value at the default grid (r_max = 20, 2000 points)
    assert -pekar1.energy == pytest.approx(0.1085118, abs=2e-7)


def test_below_gaussian_trial(pekar1):
    assert pekar1.energy <= oracles.GAUSSIAN_TRIAL_ENERGY


def test_virial(pekar1):
    e = pekar1.energy
    assert abs(pekar1.kinetic + e) / abs(e) <= 1e-3
    assert abs(pekar1.beta * pekar1.attraction + 2 * e) / abs(e) <= 1e-3


def test_descent_is_monotone(pekar1):
    h = np.asarray(pekar1.history)
    assert np.all(np.diff(h) <= 1e-12)


def test_solution_normalized_and_converged(pekar1):
    assert pekar1.psi.norm() == pytest.approx(1.0, abs=1e-10)
    assert pekar1.residual <= 1e-8
    assert pekar1.converged


def test_scaling_covariance(grid, pekar1):
    ref = pekar1.energy
    for beta in (0.5, 2.0, 4.0):
        r = solve_pekar(beta, grid)
        assert r.energy / beta**2 == pytest.approx(ref, rel=1e-6)
        assert r.psi.grid.r_max == pytest.approx(20.0 / beta)


def test_uniqueness_from_random_starts(grid, pekar1):
    a = solve_pekar(1.0, grid, PekarOptions(seed=11))
    b = solve_pekar(1.0, grid, PekarOptions(seed=12))
    assert a.energy == pytest.approx(b.energy, abs=1e-8)
    assert a.energy == pytest.approx(pekar1.energy, abs=1e-8)
    sign = np.sign(np.dot(a.psi.values, b.psi.values))
    assert np.max(np.abs(a.psi.values - sign * b.psi.values)) <= 1e-6


def test_dominates_trial_library(grid, pekar1):
    trials = trial_library(grid)
    assert len(trials) == 10
    for t in trials:
        assert pekar1.energy <= pekar_energy(t, 1.0)[0]


def test_coarse_vs_fine_grid(pekar1):
    coarse = pekar_constant(build_radial_grid(20.0, 200))
    assert coarse == pytest.approx(-pekar1.energy, rel=5e-3)


@pytest.mark.parametrize("beta", [0.0, -1.0, np.inf, np.nan])
def test_invalid_beta(beta):
    with pytest.raises(InvalidArgument):
        solve_pekar(beta)


def test_no_convergence_reports_diagnostics(small_grid):
    with pytest.raises(NoConvergence) as exc:
        solve_pekar(1.0, small_grid, PekarOptions(max_iter=3))
    assert exc.value.diagnostics["iterations"] == 3
    assert exc.value.partial is not None
