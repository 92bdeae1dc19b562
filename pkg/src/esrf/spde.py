"""Term-by-term audit of the mean-field SPDE against Kushner-Stratonovich.

For a Gaussian law the four terms of the mean-field equation reduce to
closed-form moment expressions; the quadratic-curvature term and the gain
drift term must cancel, and the innovation coefficient must equal the
Kushner-Stratonovich one.  The two sides are evaluated through different
moment routes so the audit checks the identities rather than re-deriving
one expression twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedTestFunction
from .la import symmetrize
from .reference import GaussianBelief
from .transforms import _pd_solve, theta_matrix


@dataclass(frozen=True)
class SpdeTerms:
    dynamics_drift: float          # (I), 0.0 when no model is supplied
    curvature_drift: float         # (II)
    gain_drift: float              # (IV)
    innovation_mf: np.ndarray      # coefficient of the innovation in (III)
    innovation_ks: np.ndarray      # Kushner-Stratonovich innovation coefficient

    @property
    def cancellation_residual(self) -> float:
        return abs(self.curvature_drift + self.gain_drift)

    @property
    def innovation_residual(self) -> float:
        return float(np.max(np.abs(self.innovation_mf - self.innovation_ks)))


def _parse_phi(phi, d: int):
    if isinstance(phi, (tuple, list)) and phi and phi[0] in ("coordinate", "quadratic"):
        idx = tuple(int(i) for i in phi[1:])
        if phi[0] == "coordinate" and len(idx) == 1 and 0 <= idx[0] < d:
            return "coordinate", idx
        if phi[0] == "quadratic" and len(idx) == 2 and all(0 <= i < d for i in idx):
            return "quadratic", idx
    raise UnsupportedTestFunction(
        f"expected ('coordinate', k) or ('quadratic', k, l) with indices < {d}, got {phi!r}"
    )


def spde_terms(belief: GaussianBelief, H, R, phi,
               drift_matrix=None, noise_cov=None) -> SpdeTerms:
    """Closed-form Gaussian evaluation of the mean-field SPDE terms.

    phi is ("coordinate", k) for x -> x_k or ("quadratic", k, l) for
    x -> x_k x_l.  Drift parts are returned per unit dt, the innovation
    coefficients per unit innovation.  The dynamics term needs the linear
    drift matrix and model noise covariance; without them it is reported
    as 0.0 (it is common to both equations and cancels in any comparison).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = symmetrize(R)
    m, P = belief.mean, belief.cov
    d = m.size
    kind, idx = _parse_phi(phi, d)
    theta = theta_matrix(H, R)
    gain_right = _pd_solve(R, H).T          # H^T R^-1

    if kind == "coordinate":
        (k,) = idx
        curvature = 0.0                     # vanishing Hessian
        gain_drift = 0.0                    # E[(P Theta (x - m))_k] = 0
        grad_mean = _unit(d, k)
        innovation_mf = grad_mean @ P @ gain_right
        innovation_ks = P[k] @ gain_right   # Cov(x_k, x) H^T R^-1
        dyn = 0.0
        if drift_matrix is not None:
            B = np.atleast_2d(np.asarray(drift_matrix, dtype=float))
            dyn = float((B @ m)[k])
    else:
        k, l = idx
        hess = np.zeros((d, d))
        hess[k, l] += 1.0
        hess[l, k] += 1.0
        curvature = 0.5 * float(np.trace(P @ theta @ P @ hess))
        bp = P @ theta @ P                  # E[x_i (P Theta z)_j] entries
        gain_drift = -0.5 * (float(bp[k, l]) + float(bp[l, k]))
        grad_mean = m[l] * _unit(d, k) + m[k] * _unit(d, l)
        innovation_mf = grad_mean @ P @ gain_right
        # E[x_k x_l (x - m)] = m_k P[l] + m_l P[k]; third central moments vanish
        innovation_ks = (m[k] * P[l] + m[l] * P[k]) @ gain_right
        dyn = 0.0
        if drift_matrix is not None and noise_cov is not None:
            B = np.atleast_2d(np.asarray(drift_matrix, dtype=float))
            Q = symmetrize(noise_cov)
            second = P + np.outer(m, m)
            bs = B @ second
            dyn = float(Q[k, l]) + float(bs[k, l]) + float(bs[l, k])

    return SpdeTerms(
        dynamics_drift=dyn,
        curvature_drift=float(curvature),
        gain_drift=float(gain_drift),
        innovation_mf=np.asarray(innovation_mf, dtype=float).reshape(-1),
        innovation_ks=np.asarray(innovation_ks, dtype=float).reshape(-1),
    )


def _unit(d: int, k: int) -> np.ndarray:
    e = np.zeros(d)
    e[k] = 1.0
    return e
