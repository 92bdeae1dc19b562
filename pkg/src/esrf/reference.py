"""Exact moment references: Kalman recursions and Kalman-Bucy integration.

In the linear-Gaussian setting these are the moments of the mean-field
process, so they double as ground truth for the consistency experiments.
The update step deliberately reuses the same Kalman gain code path as the
ensemble analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStep, NotPSD
from .la import symmetrize
from .models import StateSpaceModel, ObservationSeries
from .transforms import kalman_gain, theta_matrix, _pd_solve

PSD_CLIP_BUDGET = 1e-8   # cumulative negative-eigenvalue mass tolerated per run


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))
        object.__setattr__(self, "cov", symmetrize(self.cov))
        if self.cov.shape[0] != self.mean.size:
            raise ValueError("mean and covariance dimensions differ")


def kf_predict(b: GaussianBelief, B, Q) -> GaussianBelief:
    """Linear forecast of mean and covariance: (Bm, B P B^T + Q)."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return GaussianBelief(B @ b.mean, B @ b.cov @ B.T + np.asarray(Q))


def kf_update(b: GaussianBelief, y, H, R) -> GaussianBelief:
    """Standard Kalman update through the shared gain code path."""
    y = np.asarray(y, dtype=float).reshape(-1)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    K = kalman_gain(b.cov, H, R)
    mean = b.mean + K @ (y - H @ b.mean)
    cov = (np.eye(b.mean.size) - K @ H) @ b.cov
    return GaussianBelief(mean, cov)


def kf_filter(b0: GaussianBelief, model: StateSpaceModel, obs: ObservationSeries
              ) -> tuple[list[GaussianBelief], list[GaussianBelief]]:
    """Forecast and analysis belief sequences over a discrete observation record."""
    if not model.is_linear:
        raise ValueError("the Kalman recursion requires a linear model")
    if obs.kind != "levels":
        raise ValueError("discrete Kalman filtering consumes observation levels")
    forecasts, analyses = [], []
    b = b0
    for y in obs.values:
        bf = kf_predict(b, model.drift_matrix, model.Q)
        b = kf_update(bf, y, model.H, model.R)
        forecasts.append(bf)
        analyses.append(b)
    return forecasts, analyses


def _clip_psd(P: np.ndarray, budget_used: float) -> tuple[np.ndarray, float]:
    lam, vec = np.linalg.eigh(P)
    neg = -lam[lam < 0.0].sum()
    if neg > 0.0:
        budget_used += float(neg)
        if budget_used > PSD_CLIP_BUDGET:
            raise NotPSD(
                f"cumulative clipped eigenvalue mass {budget_used:.3e} exceeds "
                f"budget {PSD_CLIP_BUDGET:.1e}; Riccati flow lost positivity"
            )
        P = symmetrize((vec * np.clip(lam, 0.0, None)) @ vec.T)
    return P, budget_used


def kb_integrate(b0: GaussianBelief, model: StateSpaceModel, obs: ObservationSeries,
                 dt: float) -> list[GaussianBelief]:
    """Euler integration of the Kalman-Bucy mean and Riccati covariance flow.

    P <- P + (BP + PB^T + Q - P Theta P) dt, re-symmetrized and PSD-clipped
    each step, and m <- m + Bm dt + P H^T R^-1 (dY - Hm dt) driven by the
    recorded increments.  Returns beliefs at every grid point including t=0.
    """
    if dt <= 0.0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    if not model.is_linear:
        raise ValueError("kb_integrate requires a linear continuous model")
    if obs.kind != "increments":
        raise ValueError("kb_integrate consumes observation increments")
    B = model.drift_matrix
    Q = model.Q.entries
    H = model.H
    theta = theta_matrix(H, model.R.entries)
    gain_right = _pd_solve(model.R.entries, H).T     # H^T R^-1
    m = b0.mean.copy()
    P = b0.cov.copy()
    out = [GaussianBelief(m, P)]
    budget = 0.0
    for dy in obs.values:
        innovation = dy - H @ m * dt
        m = m + B @ m * dt + P @ gain_right @ innovation
        P = symmetrize(P + (B @ P + P @ B.T + Q - P @ theta @ P) * dt)
        P, budget = _clip_psd(P, budget)
        out.append(GaussianBelief(m, P))
    return out


def belief_rows(beliefs: list[GaussianBelief], times=None):
    """Yield CSV rows (header first): time, mean, upper triangle of P."""
    d = beliefs[0].mean.size
    idx = [(i, j) for i in range(d) for j in range(i, d)]
    yield ["time"] + [f"m_{i+1}" for i in range(d)] + [f"P_{i+1}{j+1}" for i, j in idx]
    if times is None:
        times = range(len(beliefs))
    for t, b in zip(times, beliefs):
        yield [float(t)] + [float(v) for v in b.mean] + [float(b.cov[i, j]) for i, j in idx]
