"""Ensembles, the forecast/analysis cycle, and structural identity audits."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import transforms
from .la import spectral_norm, sqrt_psd, symmetrize
from .models import StateSpaceModel
from .rng import NoiseStream
from .transforms import (
    apply_etkf,
    gain_bound_constants,
    kalman_gain,
    theta_matrix,
    transform_eakf,
    transform_etkf,
    transform_unified,
    transform_whitaker,
    whitaker_r_factor,
)


class TransformVariant(str, Enum):
    EAKF = "EAKF"
    ETKF_DIRECT = "ETKF_direct"        # right-multiply deviations by the M x M transform
    ETKF_VIA_T = "ETKF_via_T"          # same filter through the state-space map
    WHITAKER = "Whitaker"
    UNIFIED_T = "UnifiedT"

    @classmethod
    def parse(cls, tag: str) -> "TransformVariant":
        for v in cls:
            if v.value.lower() == str(tag).lower():
                return v
        raise ValueError(f"unknown transform variant {tag!r}")


def default_variant(M: int, d: int) -> TransformVariant:
    """Cost-based tie-break: ensemble-space transform only pays off for M < d."""
    return TransformVariant.ETKF_DIRECT if M < d else TransformVariant.EAKF


class Ensemble:
    """Ordered ensemble of M state vectors with cached empirical statistics.

    Members are the columns of a (d, M) array.  The covariance uses the
    1/(M-1) normalization throughout.
    """

    __slots__ = ("members", "d", "M", "mean", "deviations", "cov")

    def __init__(self, members):
        members = np.atleast_2d(np.asarray(members, dtype=float))
        if members.shape[1] < 2:
            raise ValueError("an ensemble needs at least 2 members")
        self.members = members
        self.d, self.M = members.shape
        self.mean = members.mean(axis=1)
        self.deviations = members - self.mean[:, None]
        self.cov = symmetrize(self.deviations @ self.deviations.T / (self.M - 1))

    @classmethod
    def sample(cls, mean, cov, M: int, stream: NoiseStream, step: int = 0) -> "Ensemble":
        """Draw M i.i.d. members from N(mean, cov)."""
        mean = np.asarray(mean, dtype=float).reshape(-1)
        z = stream.member_normals(step, M, mean.size)
        return cls(mean[:, None] + sqrt_psd(cov) @ z)

    def __repr__(self):
        return f"Ensemble(d={self.d}, M={self.M})"


def forecast(ens: Ensemble, model: StateSpaceModel, stream: NoiseStream, step: int
             ) -> Ensemble:
    """Propagate every member through the model with independent draws."""
    w = stream.member_normals(step, ens.M, model.d)
    return Ensemble(model.drift(ens.members) + model.C @ w)


def analyzed_deviations(ens: Ensemble, variant: TransformVariant, H, R) -> np.ndarray:
    if variant is TransformVariant.EAKF:
        return transform_eakf(ens.cov, H, R) @ ens.deviations
    if variant is TransformVariant.WHITAKER:
        return transform_whitaker(ens.cov, H, R) @ ens.deviations
    if variant in (TransformVariant.UNIFIED_T, TransformVariant.ETKF_VIA_T):
        return transform_unified(ens.cov, H, R) @ ens.deviations
    if variant is TransformVariant.ETKF_DIRECT:
        return apply_etkf(ens.deviations, H, R)
    raise ValueError(f"unhandled variant {variant}")


def analysis(ens: Ensemble, y, variant: TransformVariant, H, R) -> Ensemble:
    """Deterministic update of a forecast ensemble with observation y.

    The mean moves by the Kalman gain acting on the innovation; the
    deviations are mapped by the chosen square-root transform so that the
    analyzed covariance satisfies the (Id - KH)P identity.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    K = kalman_gain(ens.cov, H, R)
    mean_a = ens.mean + K @ (y - H @ ens.mean)
    dev_a = analyzed_deviations(ens, variant, H, R)
    return Ensemble(mean_a[:, None] + dev_a)


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    residual: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.residual <= self.tolerance


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[IdentityCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name: str) -> IdentityCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def audit_identities(ens_f: Ensemble, H, R) -> AuditReport:
    """Residuals of the structural identities and explicit norm bounds.

    Covers, for one forecast ensemble: the covariance-update consistency of
    every variant, the adjointness of the state-space and ensemble-space
    transforms, the explicit bounds on the unified transform, the gain and
    its Lipschitz constant, the modified-gain factor bound, and mean
    preservation of the ensemble-space transform.  Reports only; never
    raises on a violation.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = symmetrize(R)
    P = ens_f.cov
    E = ens_f.deviations
    M = ens_f.M
    theta = theta_matrix(H, R)
    r_inv_norm = spectral_norm(np.linalg.inv(R))
    target = (np.eye(ens_f.d) - kalman_gain(P, H, R) @ H) @ P
    scale = max(1.0, spectral_norm(P))

    checks = []
    for variant in TransformVariant:
        dev_a = analyzed_deviations(ens_f, variant, H, R)
        cov_a = dev_a @ dev_a.T / (M - 1)
        checks.append(IdentityCheck(
            name=f"consistency:{variant.value}",
            residual=spectral_norm(cov_a - target) / scale,
            tolerance=1e-8,
        ))

    A = transform_eakf(P, H, R)
    T = transform_etkf(E, H, R)
    e_norm = max(np.linalg.norm(E), 1e-300)
    checks.append(IdentityCheck(
        name="adjointness",
        residual=np.linalg.norm(A @ E - E @ T) / e_norm,
        tolerance=1e-9,
    ))

    t_norm = spectral_norm(transform_unified(P, H, R))
    checks.append(IdentityCheck(
        name="unified_bound",
        residual=max(0.0, t_norm - (1.0 + 0.5 * spectral_norm(theta) * spectral_norm(P))),
        tolerance=0.0,
    ))

    c_gain, l_gain = gain_bound_constants(P, H, R)
    checks.append(IdentityCheck(
        name="gain_bound",
        residual=max(0.0, spectral_norm(np.eye(ens_f.d) - kalman_gain(P, H, R) @ H) - c_gain),
        tolerance=0.0,
    ))

    # Lipschitz audit on the natural companion pair (forecast, analyzed)
    Q = symmetrize(target)
    gain_diff = spectral_norm(kalman_gain(P, H, R) - kalman_gain(Q, H, R))
    checks.append(IdentityCheck(
        name="gain_lipschitz",
        residual=max(0.0, gain_diff - l_gain * spectral_norm(P - Q)),
        tolerance=0.0,
    ))

    checks.append(IdentityCheck(
        name="whitaker_factor_bound",
        residual=max(0.0, spectral_norm(whitaker_r_factor(P, H, R)) - 0.5 * r_inv_norm),
        tolerance=0.0,
    ))

    ones = np.ones(M)
    checks.append(IdentityCheck(
        name="etkf_mean_preservation",
        residual=float(np.max(np.abs(T @ ones - ones))),
        tolerance=1e-12,
    ))

    return AuditReport(checks=tuple(checks))


def gaussian_consistent_members(mean, cov, M: int) -> np.ndarray:
    """Members whose empirical mean and covariance equal (mean, cov) exactly.

    Builds deviations from a mean-free orthogonal frame: M-1 scaled
    contrasts give E E^T/(M-1) = cov with zero column sums.  Useful for
    degenerate-coupling checks where the sampling error must vanish.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    d = mean.size
    if M < d + 1:
        raise ValueError("need at least d+1 members to match a full-rank covariance")
    contrasts = np.eye(M)[:, :d] - 1.0 / M   # M x d, columns mean-free and independent
    q, _ = np.linalg.qr(contrasts)           # orthonormal, spans the same mean-free space
    E = sqrt_psd(cov) @ q.T * np.sqrt(M - 1)
    return mean[:, None] + E


__all__ = [
    "AuditReport",
    "Ensemble",
    "IdentityCheck",
    "TransformVariant",
    "analysis",
    "analyzed_deviations",
    "audit_identities",
    "default_variant",
    "forecast",
    "gaussian_consistent_members",
    "transforms",
]
