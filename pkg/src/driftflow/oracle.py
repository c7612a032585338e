"""Ground truth for 1-D experiments: Kalman closed form and grid quadrature."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from driftflow.models import GaussianSpec, Likelihood
from driftflow.particles import ParticleSet

ENDPOINT_RATIO = 1e-10


def kalman_posterior(prior: GaussianSpec, y_hat: float, noise_std: float) -> GaussianSpec:
    """Posterior of ``x ~ prior`` after observing ``y_hat = x + v``."""
    if not noise_std > 0:
        raise ValueError("noise_std must be positive")
    vp, vv = prior.var, noise_std * noise_std
    mean = (vp * y_hat + vv * prior.mean) / (vp + vv)
    var = vp * vv / (vp + vv)
    return GaussianSpec(mean, math.sqrt(var))


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


@dataclass(frozen=True, eq=False)
class GridPosterior:
    grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray

    @property
    def lo(self) -> float:
        return float(self.grid[0])

    @property
    def hi(self) -> float:
        return float(self.grid[-1])

    def mean(self) -> float:
        return float(np.trapezoid(self.grid * self.density, self.grid))

    def var(self) -> float:
        m = self.mean()
        return float(np.trapezoid((self.grid - m) ** 2 * self.density, self.grid))

    def cdf_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.cdf)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,pdf,cdf\n")
        for row in zip(self.grid, self.density, self.cdf):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


def grid_posterior(
    prior_logpdf: Callable[[np.ndarray], np.ndarray],
    lik: Likelihood,
    lo: float,
    hi: float,
    n: int = 4001,
) -> GridPosterior:
    """Posterior density on ``n`` equispaced points, trapezoid-normalized."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    if n < 1000:
        raise ValueError("use at least 1000 grid points")
    grid = np.linspace(lo, hi, n)
    logp = np.asarray(prior_logpdf(grid), dtype=float) + lik.log_eval(grid[:, None])
    top = np.max(logp)
    if not np.isfinite(top):
        raise ValueError("posterior has zero mass on the grid")
    dens = np.exp(logp - top)
    if max(dens[0], dens[-1]) >= ENDPOINT_RATIO:
        raise ValueError(f"posterior mass reaches the grid ends [{lo}, {hi}]; widen the grid")
    cdf = _cumtrapz(dens, grid)
    total = cdf[-1]
    return GridPosterior(grid, dens / total, cdf / total)


def default_grid(prior: GaussianSpec, half_width: float = 8.0) -> tuple[float, float]:
    return prior.mean - half_width * prior.std, prior.mean + half_width * prior.std


def quantile(gp: GridPosterior, p: float) -> float:
    """Inverse CDF by linear interpolation; flat stretches resolve to their left end."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 1.0:
        return gp.hi
    cdf, grid = gp.cdf, gp.grid
    k = int(np.searchsorted(cdf, p, side="left"))
    if k == 0:
        return gp.lo
    c0, c1 = cdf[k - 1], cdf[k]
    t = (p - c0) / (c1 - c0)
    return float(grid[k - 1] + t * (grid[k] - grid[k - 1]))


def quantile_samples(gp: GridPosterior, L: int) -> np.ndarray:
    """Equal-mass representatives at the midpoint probabilities ``(i - 1/2) / L``."""
    return np.array([quantile(gp, (i + 0.5) / L) for i in range(L)])


def empirical_cdf(pset: ParticleSet, x: np.ndarray) -> np.ndarray:
    """Right-continuous weighted CDF of a 1-D set evaluated at ``x``."""
    order = np.argsort(pset.locations[:, 0], kind="stable")
    locs = pset.locations[order, 0]
    cum = np.concatenate([[0.0], np.cumsum(pset.weights[order])])
    return cum[np.searchsorted(locs, x, side="right")]


def w1_particles_vs_grid(pset: ParticleSet, gp: GridPosterior) -> float:
    """``integral |F_particles - F_grid| dx`` over the grid (trapezoid rule)."""
    if pset.dim != 1:
        raise ValueError("W1 against a grid posterior needs 1-D particles")
    gap = np.abs(empirical_cdf(pset, gp.grid) - gp.cdf)
    return float(np.trapezoid(gap, gp.grid))
