"""Error bars for correlated Monte Carlo series by blocking.

Pairwise block averaging with an automatic stopping rule: blocking stops at
the first level where the remaining lag-one autocorrelations, summed over all
coarser levels, are consistent with zero at the 99% chi-square quantile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

MIN_BLOCKS = 64  # fewer blocks at the chosen level leave the stopping rule without power


@dataclass(frozen=True)
class BlockingResult:
    mean: float
    stderr: float
    naive_stderr: float
    level: int  # blocking transformations applied
    n_levels: int
    plateau: bool  # False when the stopping rule never fired or left too few blocks

    @property
    def tau_int(self) -> float:
        """Integrated autocorrelation time in units of the sampling interval."""
        if self.naive_stderr == 0:
            return 0.5
        return 0.5 * (self.stderr / self.naive_stderr) ** 2


def blocking(series) -> BlockingResult:
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise ValueError("blocking needs at least 4 samples")
    d = int(np.floor(np.log2(x.size)))
    x = x[-(2**d):]  # keep the most recent 2^d samples
    mu = x.mean()
    n = x.size
    var = np.empty(d)
    gamma = np.empty(d)
    for i in range(d):
        n = x.size
        xc = x - mu
        gamma[i] = np.dot(xc[:-1], xc[1:]) / n
        var[i] = np.dot(xc, xc) / n
        x = 0.5 * (x[0::2] + x[1::2])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(var > 0, gamma / var, 0.0)
    m = np.cumsum((ratio**2 * 2.0 ** np.arange(d, 0, -1))[::-1])[::-1]
    q = stats.chi2.ppf(0.99, df=np.arange(1, d + 1))
    level = d - 1
    fired = False
    for k in range(d):
        if m[k] < q[k]:
            level = k
            fired = True
            break
    n_at = 2 ** (d - level)
    plateau = fired and n_at >= MIN_BLOCKS
    stderr = float(np.sqrt(var[level] / n_at))
    naive = float(np.sqrt(var[0] / 2**d))
    return BlockingResult(float(mu), stderr, naive, level, d, plateau)


def block_means(series, n_blocks: int) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    usable = (x.size // n_blocks) * n_blocks
    if usable == 0:
        raise ValueError("fewer samples than blocks")
    return x[x.size - usable:].reshape(n_blocks, -1).mean(axis=1)
