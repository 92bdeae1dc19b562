"""Symmetric-matrix functions used by every filter variant.

All matrix functions go through a symmetric eigendecomposition: the state
dimensions here are small enough that the spectral route is both exact (up
to the eigensolver) and simpler to reason about than series approximations.
The quadrature evaluator at the bottom is an independent cross-check for
the shifted inverse square root and deliberately avoids the eigenvector
path by exponentiating with ``scipy.linalg.expm``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.special import roots_genlaguerre

from .errors import DimensionMismatch, NotPSD, QuadratureUnderResolved

# Relative eigenvalue tolerances; see module tests for the sweeps pinning them.
EIG_TOL = 1e-10        # PSD validation: eigenvalues below -EIG_TOL*max(1, lam_max) reject
PINV_CUTOFF = 1e-12    # pseudo-inverse rank decision, relative to lam_max
QUAD_TOL = 1e-6        # acceptable node-halving discrepancy for the quadrature


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def symmetrize(a) -> np.ndarray:
    """Return the symmetric part (A + A^T)/2 of a square matrix."""
    a = _as_square(a)
    return 0.5 * (a + a.T)


def psd_eigh(p) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric PSD matrix with round-off clipping.

    Eigenvalues in [-tol, 0) with tol = EIG_TOL*max(1, lam_max) are clipped
    to zero; anything below -tol raises NotPSD.  Returns (eigenvalues
    ascending, eigenvectors as columns).
    """
    p = symmetrize(p)
    lam, vec = np.linalg.eigh(p)
    tol = EIG_TOL * max(1.0, float(lam[-1]))
    if lam[0] < -tol:
        raise NotPSD(f"eigenvalue {lam[0]:.6e} below -{tol:.3e}")
    return np.clip(lam, 0.0, None), vec


class SymmetricMatrix:
    """Dense symmetric matrix, optionally validated as PSD at construction.

    The stored entries are exactly symmetric.  With ``psd=True`` the
    eigenvalues are checked; tiny negative values from round-off are clipped
    to zero (the entries are then rebuilt from the clipped spectrum).
    """

    __slots__ = ("entries", "dim", "psd_flag")

    def __init__(self, entries, psd: bool = False):
        a = symmetrize(entries)
        if psd:
            lam, vec = np.linalg.eigh(a)
            tol = EIG_TOL * max(1.0, float(lam[-1]))
            if lam[0] < -tol:
                raise NotPSD(f"eigenvalue {lam[0]:.6e} below -{tol:.3e}")
            if lam[0] < 0.0:
                a = symmetrize((vec * np.clip(lam, 0.0, None)) @ vec.T)
        self.entries = a
        self.dim = a.shape[0]
        self.psd_flag = bool(psd)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def __repr__(self):
        return f"SymmetricMatrix(dim={self.dim}, psd={self.psd_flag})"


def sqrt_psd(p) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix."""
    lam, vec = psd_eigh(p)
    return symmetrize((vec * np.sqrt(lam)) @ vec.T)


def pinv_sqrt(p) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of sqrt_psd(p).

    Eigenvalues below PINV_CUTOFF relative to the largest are treated as
    exactly zero, which is what rank-deficient ensemble covariances
    (M - 1 < d) require.
    """
    lam, vec = psd_eigh(p)
    cut = PINV_CUTOFF * float(lam[-1])
    inv = np.where(lam > cut, 1.0 / np.sqrt(np.maximum(lam, 1e-300)), 0.0)
    return symmetrize((vec * inv) @ vec.T)


def inv_sqrt_shifted(s) -> np.ndarray:
    """(Id + S)^(-1/2) for symmetric PSD S, via the spectral decomposition.

    All eigenvalues of the result lie in (0, 1].
    """
    lam, vec = psd_eigh(s)
    return symmetrize((vec * (1.0 + lam) ** -0.5) @ vec.T)


def inv_sqrt_pd(s) -> np.ndarray:
    """S^(-1/2) for symmetric positive definite S."""
    lam, vec = psd_eigh(s)
    if lam[0] <= 0.0:
        raise NotPSD("matrix is singular; strictly positive spectrum required")
    return symmetrize((vec * lam**-0.5) @ vec.T)


def laguerre_half_nodes(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Generalized Gauss-Laguerre rule for the weight t^(-1/2) e^(-t) on (0, inf)."""
    if nodes < 4:
        raise ValueError("at least 4 quadrature nodes required")
    t, w = roots_genlaguerre(nodes, -0.5)
    if not (np.isfinite(t).all() and np.isfinite(w).all()):
        # the recurrence underlying roots_genlaguerre degrades past a few hundred nodes
        raise ValueError(f"quadrature weights not finite at {nodes} nodes")
    return t, w


def _laguerre_matrix_sum(s: np.ndarray, nodes: int) -> np.ndarray:
    t, w = laguerre_half_nodes(nodes)
    acc = np.zeros_like(s)
    for tj, wj in zip(t, w):
        acc += wj * expm(-tj * s)
    return acc / np.sqrt(np.pi)


def integral_inv_sqrt(s, nodes: int = 64) -> np.ndarray:
    """Quadrature evaluation of (Id + S)^(-1/2) for symmetric PSD S.

    Evaluates (1/sqrt(pi)) * int_0^inf t^(-1/2) e^(-t) e^(-tS) dt by
    generalized Gauss-Laguerre quadrature.  Serves as an independent oracle
    for :func:`inv_sqrt_shifted`; the matrix exponentials go through
    ``scipy.linalg.expm`` rather than the shared eigendecomposition.

    Raises QuadratureUnderResolved when the full-node and half-node results
    differ by more than QUAD_TOL in spectral norm, which happens once the
    spectrum of S extends past roughly 10 at the default 64 nodes.
    """
    lam, vec = psd_eigh(s)  # validation only
    s = symmetrize(s)
    full = _laguerre_matrix_sum(s, nodes)
    half = _laguerre_matrix_sum(s, max(4, nodes // 2))
    est = spectral_norm(full - half)
    if est > QUAD_TOL:
        raise QuadratureUnderResolved(
            f"node-halving discrepancy {est:.3e} exceeds {QUAD_TOL:.1e}; "
            f"increase nodes or rescale the spectrum (max eigenvalue {lam[-1]:.3e})"
        )
    return symmetrize(full)


def spectral_norm(a) -> float:
    """Largest singular value."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return abs(float(a))
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def trace(a) -> float:
    """Trace of a square matrix."""
    return float(np.trace(_as_square(a)))
