"""Log-log rate fitting and bootstrap machinery for the harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateFit


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: tuple[float, float]
    residual_std: float
    n_points: int


def fit_rate(points) -> RateFit:
    """Ordinary least squares of log D against log M.

    ``points`` is a sequence of (M, D) pairs; at least 4 distinct M values
    with strictly positive D are required.  The confidence interval is the
    95% t-interval from the residual variance (width zero for an exact
    power law).
    """
    points = [(float(m), float(d)) for m, d in points]
    ms = np.array([m for m, _ in points])
    ds = np.array([d for _, d in points])
    if len(points) < 4 or len(np.unique(ms)) < 4:
        raise DegenerateFit("rate fit needs at least 4 distinct ensemble sizes")
    if np.any(ds <= 0.0):
        raise DegenerateFit("rate fit needs strictly positive errors")
    x = np.log(ms)
    y = np.log(ds)
    n = len(x)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ y) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = n - 2
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(sigma2 / sxx)
    half = float(stats.t.ppf(0.975, dof)) * se
    return RateFit(slope=slope, intercept=intercept, ci=(slope - half, slope + half),
                   residual_std=float(np.sqrt(sigma2)), n_points=n)


def bootstrap_se(values, statistic, n_boot: int, rng: np.random.Generator) -> float:
    """Standard error of a scalar statistic under i.i.d. resampling."""
    values = np.asarray(values, dtype=float)
    idx = rng.integers(0, len(values), size=(n_boot, len(values)))
    boot = np.array([statistic(values[row]) for row in idx])
    return float(np.std(boot))


def bootstrap_slope_ci(samples_by_m: dict[int, np.ndarray], p: float,
                       n_boot: int, rng: np.random.Generator,
                       level: float = 0.95) -> tuple[float, float]:
    """Percentile CI of the fitted slope under replication resampling.

    ``samples_by_m`` maps each ensemble size to the per-replication delta
    values entering the D estimate; every bootstrap draw resamples the
    replications of every M independently and refits the slope.
    """
    ms = sorted(samples_by_m)
    if len(ms) < 4:
        raise DegenerateFit("slope bootstrap needs at least 4 ensemble sizes")
    powered = {m: np.asarray(samples_by_m[m], dtype=float) ** p for m in ms}
    log_m = np.log(np.array(ms, dtype=float))
    xc = log_m - log_m.mean()
    sxx = float(xc @ xc)
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        log_d = np.empty(len(ms))
        for i, m in enumerate(ms):
            vals = powered[m]
            draw = vals[rng.integers(0, len(vals), size=len(vals))]
            log_d[i] = np.log(np.mean(draw) ** (1.0 / p))
        slopes[b] = float(xc @ log_d) / sxx
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(slopes, [alpha, 1.0 - alpha])
    return float(lo), float(hi)
