"""Confidence ellipsoids and the smallest level that still contains a point."""

import numpy as np

from ..errors import SingularC
from .chi2 import chi2_quantile, chi2_sf

CLIP = 1e-14


def mahalanobis_sq(p, center, C):
    """Return ``(d2, clipped)`` for ``d2 = (p - c)^T C^-1 (p - c)``.

    The quadratic form is evaluated in the eigenbasis of ``C``. Eigenvalues
    below ``1e-14 * lambda_max`` are raised to that floor and ``clipped``
    reports whether that happened.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    diff = np.atleast_1d(np.asarray(p, dtype=float) - np.asarray(center, dtype=float))
    if C.shape != (diff.size, diff.size):
        raise ValueError(f"C has shape {C.shape}, expected ({diff.size}, {diff.size})")
    if not np.all(np.isfinite(C)):
        raise SingularC("covariance has non-finite entries")
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    top = vals[-1]
    if top <= 0 or vals[0] < -1e-10 * top:
        raise SingularC(f"covariance is not positive definite (eigenvalues {vals})")
    floor = CLIP * top
    clipped = bool(vals[0] < floor)
    vals = np.maximum(vals, floor)
    coords = vecs.T @ diff
    return float(np.sum(coords * coords / vals)), clipped


def alpha_min(p_val, p_cal, C_cal):
    """Survival function of chi2 with ``n_p`` dof at the Mahalanobis distance."""
    d2, _ = mahalanobis_sq(p_val, p_cal, C_cal)
    return chi2_sf(d2, np.atleast_1d(p_cal).size)


def ellipsoid_contains(p, center, C, alpha):
    """True when ``p`` lies in the level-``alpha`` confidence ellipsoid around ``center``."""
    d2, _ = mahalanobis_sq(p, center, C)
    return d2 <= chi2_quantile(np.atleast_1d(center).size, alpha)
