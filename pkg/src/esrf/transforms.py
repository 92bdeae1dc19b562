"""Kalman gain and the square-root analysis transforms.

The three classic deterministic-update choices (state-space adjustment,
ensemble-space transform, and the unperturbed modified-gain filter) are all
implemented against the same consistency target: the analyzed covariance
must equal (Id - K(P)H) P exactly.  The unified map couples them: applied
to the deviations it reproduces the adjustment filter on the range of P and
leaves the kernel alone, and acting from the left it matches the
ensemble-space transform acting from the right.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import SolveFailure
from .la import (
    PINV_CUTOFF,
    inv_sqrt_pd,
    inv_sqrt_shifted,
    pinv_sqrt,
    psd_eigh,
    spectral_norm,
    sqrt_psd,
    symmetrize,
)


def _pd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.solve(a, b, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailure(f"positive-definite solve failed: {exc}") from exc


def theta_matrix(H, R) -> np.ndarray:
    """Observation precision pullback H^T R^-1 H."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = symmetrize(R)
    return symmetrize(H.T @ _pd_solve(R, H))


def kalman_gain(P, H, R) -> np.ndarray:
    """K(P) = P H^T (R + H P H^T)^-1 via a symmetric positive-definite solve."""
    P = symmetrize(P)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = symmetrize(R)
    innov_cov = symmetrize(R + H @ P @ H.T)
    return _pd_solve(innov_cov, H @ P).T


def transform_eakf(P, H, R) -> np.ndarray:
    """Adjustment transform A = S (Id + S Theta S)^(-1/2) S^+, S = sqrt(P).

    The pseudo-inverse handles rank-deficient forecast covariances; A then
    annihilates the kernel of P, which is harmless because deviation columns
    always lie in its range.
    """
    S = sqrt_psd(P)
    inner = inv_sqrt_shifted(S @ theta_matrix(H, R) @ S)
    return S @ inner @ pinv_sqrt(P)


def transform_unified(P, H, R) -> np.ndarray:
    """The mean-field transform: adjustment on range(P), identity on ker(P).

    On the range of P this equals the integral representation
    (1/sqrt(pi)) int t^(-1/2) e^(-t) e^(-t P Theta) dt; extending by the
    identity on the kernel means a degenerate ensemble is transformed
    without inventing spread.
    """
    lam, vec = psd_eigh(P)
    cut = PINV_CUTOFF * float(lam[-1])
    keep = lam > cut
    sq = np.where(keep, np.sqrt(np.maximum(lam, 1e-300)), 0.0)
    S = (vec * sq) @ vec.T
    inner = inv_sqrt_shifted(S @ theta_matrix(H, R) @ S)
    Sp = (vec * np.where(keep, 1.0 / np.maximum(sq, 1e-300), 0.0)) @ vec.T
    ker_proj = (vec * ~keep) @ vec.T
    return S @ inner @ Sp + ker_proj


def transform_unified_quadrature(P, H, R, nodes: int = 64) -> np.ndarray:
    """Quadrature oracle for transform_unified on full-rank P.

    Evaluates (1/sqrt(pi)) sum_j w_j e^(-t_j P Theta) with the
    scaling-and-squaring matrix exponential; oracle-only code path, kept
    separate from the spectral route it cross-checks.
    """
    from .la import laguerre_half_nodes

    P = symmetrize(P)
    PTheta = P @ theta_matrix(H, R)
    t, w = laguerre_half_nodes(nodes)
    acc = np.zeros_like(P)
    for tj, wj in zip(t, w):
        acc += wj * scipy.linalg.expm(-tj * PTheta)
    return acc / np.sqrt(np.pi)


def transform_etkf(E, H, R) -> np.ndarray:
    """Ensemble-space transform T = (Id_M + E~^T Theta E~)^(-1/2), E~ = E/sqrt(M-1).

    Materializes the full M x M matrix; for large ensembles use
    :func:`apply_etkf`, which produces E @ T without forming T.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    G = _half_whitened_obs(E, H, R)          # q x M
    return inv_sqrt_shifted(symmetrize(G.T @ G))


def _half_whitened_obs(E, H, R) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    M = E.shape[1]
    Etil = E / np.sqrt(M - 1)
    return inv_sqrt_pd(R) @ (H @ Etil)


def _shift_ratio(mu: np.ndarray) -> np.ndarray:
    # ((1+mu)^(-1/2) - 1)/mu, continuously extended by 0 at mu = 0
    cut = PINV_CUTOFF * max(1.0, float(mu[-1]))
    safe = np.maximum(mu, 1e-300)
    return np.where(mu > cut, ((1.0 + safe) ** -0.5 - 1.0) / safe, 0.0)


def apply_etkf(E, H, R) -> np.ndarray:
    """E @ T without materializing T, exact through the rank-q spectrum.

    T differs from the identity only on the range of G^T with
    G = R^(-1/2) H E~, so E @ T = E + (E G^T) U diag(c) U^T G at O(M q^2)
    cost.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    G = _half_whitened_obs(E, H, R)
    mu, U = psd_eigh(G @ G.T)
    coef = _shift_ratio(mu)
    return E + (E @ G.T @ U) * coef @ (U.T @ G)


def transform_whitaker(P, H, R) -> np.ndarray:
    """Unperturbed-filter factor Id - K~ H with the modified gain K~.

    K~ = P H^T F^(-1/2) (F^(1/2) + R^(1/2))^(-1), F = R + H P H^T.
    """
    P = symmetrize(P)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = symmetrize(R)
    F = symmetrize(R + H @ P @ H.T)
    try:
        sum_inv = scipy.linalg.solve(sqrt_psd(F) + sqrt_psd(R), np.eye(F.shape[0]),
                                     assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailure(f"Whitaker gain solve failed: {exc}") from exc
    K_mod = P @ H.T @ inv_sqrt_pd(F) @ sum_inv
    return np.eye(P.shape[0]) - K_mod @ H


def whitaker_r_factor(P, H, R) -> np.ndarray:
    """The factor F^(-1/2)(F^(1/2)+R^(1/2))^(-1) whose norm is <= |R^-1|/2."""
    P = symmetrize(P)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = symmetrize(R)
    F = symmetrize(R + H @ P @ H.T)
    try:
        return inv_sqrt_pd(F) @ scipy.linalg.solve(sqrt_psd(F) + sqrt_psd(R), np.eye(F.shape[0]))
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailure(f"Whitaker factor solve failed: {exc}") from exc


def gain_bound_constants(P, H, R) -> tuple[float, float]:
    """Explicit (C, L) with |Id - K(P)H| <= C and |K(P)-K(Q)| <= L |P-Q|.

    C = 1 + |P||H|^2|R^-1| and L = C |H| |R^-1|, the intermediate (correct)
    form of the gain Lipschitz estimate.
    """
    R = symmetrize(R)
    r_inv_norm = spectral_norm(np.linalg.inv(R))
    h_norm = spectral_norm(H)
    c = 1.0 + spectral_norm(P) * h_norm**2 * r_inv_norm
    return c, c * h_norm * r_inv_norm
