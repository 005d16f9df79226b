import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polaron.stats import block_means, blocking


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi * phi)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    return x


def test_iid_error_is_naive():
    x = np.random.default_rng(0).standard_normal(2**16)
    b = blocking(x)
    assert b.plateau
    assert b.stderr == pytest.approx(1 / np.sqrt(2**16), rel=0.15)
    assert b.tau_int == pytest.approx(0.5, abs=0.15)


@pytest.mark.parametrize("phi", [0.5, 0.9])
def test_ar1_autocorrelation_time(phi):
    # tau_int = (1 + phi) / (2 (1 - phi)) for an AR(1) process
    taus = [blocking(ar1(phi, 2**17, s)).tau_int for s in range(4)]
    assert np.mean(taus) == pytest.approx((1 + phi) / (2 * (1 - phi)), rel=0.25)


def test_ar1_error_covers_truth():
    # 20 independent AR(1) means with zero truth; 2 sigma coverage should be typical
    hits = 0
    for s in range(20):
        b = blocking(ar1(0.8, 2**14, 100 + s))
        hits += abs(b.mean) <= 2 * b.stderr
    assert hits >= 15


def test_too_short_raises():
    with pytest.raises(ValueError):
        blocking([1.0, 2.0, 3.0])


def test_ramp_flags_missing_plateau():
    # a linear drift stays correlated at every blocking level
    for n in (64, 4096):
        b = blocking(np.arange(float(n)))
        assert not b.plateau
        assert b.stderr > 2 * b.naive_stderr


@given(st.floats(-1e3, 1e3), st.integers(4, 2000))
def test_constant_series(c, n):
    b = blocking(np.full(n, c))
    assert b.mean == pytest.approx(c, rel=1e-12, abs=1e-12)
    assert b.stderr == pytest.approx(0.0, abs=1e-9 * (1 + abs(c)))


@given(st.lists(st.floats(-1e3, 1e3), min_size=32, max_size=500), st.integers(1, 16))
def test_block_means_average_to_tail_mean(values, n_blocks):
    x = np.asarray(values)
    b = block_means(x, n_blocks)
    usable = (x.size // n_blocks) * n_blocks
    assert b.shape == (n_blocks,)
    assert b.mean() == pytest.approx(x[x.size - usable:].mean(), rel=1e-9, abs=1e-9)


def test_block_means_too_many_blocks():
    with pytest.raises(ValueError):
        block_means(np.ones(3), 4)
