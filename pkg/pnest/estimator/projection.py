"""
Weighted projection onto the Euclidean ball {w : ||w|| <= D} in the metric of an SPD matrix M:

    argmin_{||w|| <= D} (x - w)^T M (x - w)

In the eigenbasis M = V diag(lam) V^T, with c = V^T x, the minimizer is
w(mu) = V diag(lam / (lam + mu)) c, where mu >= 0 solves the secular equation ||w(mu)|| = D.
"""
import logging

import numpy as np
from scipy.linalg import eigh

from ..common.errors import NonFiniteError, NotPositiveDefiniteError

DEFAULT_TOL = 1e-10
# inputs this close to the sphere count as interior
BOUNDARY_GRACE = 1e-12
MAX_SECULAR_ITER = 500


def _norm_and_slope(eigvals, b, mu):
    denom = eigvals + mu
    w = b / denom
    norm = np.sqrt(np.sum(w * w))
    q = np.sum(b * b / denom ** 3)
    return norm, q


def secular_root(eigvals, coords, D: float, tol: float = DEFAULT_TOL) -> float:
    """Root mu* >= 0 of ||w(mu)|| = D with ||w(mu)||^2 = sum (lam_i c_i / (lam_i + mu))^2.

    Safeguarded Newton on the reciprocal-norm function 1/D - 1/||w(mu)||, which is
    concave and increasing, started at mu = 0 and kept inside a shrinking bracket
    with bisection as fallback.

    Args:
        eigvals: positive eigenvalues lam_1..lam_p
        coords: coordinates c_1..c_p of the point in the eigenbasis
        D: ball radius
        tol: relative tolerance on | ||w(mu*)|| - D |
    Returns:
        mu (float): the multiplier
    """
    eigvals = np.asarray(eigvals, dtype=float)
    coords = np.asarray(coords, dtype=float)
    if np.any(eigvals <= 0):
        raise NotPositiveDefiniteError("secular_root needs positive eigenvalues")
    b = eigvals * coords
    norm0 = float(np.linalg.norm(coords))
    if norm0 <= D:
        raise ValueError(f"secular_root called on an interior point (||c|| = {norm0} <= D = {D})")
    lo = 0.0
    # ||w(mu)|| <= ||b|| / (lam_min + mu), so hi is on the feasible side
    hi = max(float(np.linalg.norm(b)) / D - float(np.min(eigvals)), 0.0)
    mu = 0.0
    for it in range(MAX_SECULAR_ITER):
        norm, q = _norm_and_slope(eigvals, b, mu)
        if abs(norm - D) <= tol * D:
            return mu
        if norm > D:
            lo = mu
        else:
            hi = mu
        step = (norm / D - 1.0) * norm * norm / q if q > 0 else np.inf
        candidate = mu + step
        if not (lo < candidate < hi) or not np.isfinite(candidate):
            candidate = 0.5 * (lo + hi)
        if candidate == mu:
            return mu
        mu = candidate
    logging.warning(f"secular_root stopped after {MAX_SECULAR_ITER} iterations, |norm - D| = {abs(norm - D)}")
    return mu


def project_weighted_ball(M, x, D: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Project x onto the ball of radius D in the metric of M.

    Args:
        M: symmetric positive-definite weight, p x p
        x: point to project, length p
        D: ball radius, must be positive
        tol: relative tolerance on the norm of the result, in (0, 1e-4]
    Returns:
        w (np.ndarray): the projection; x itself (a copy) when ||x|| <= D
    """
    if D <= 0:
        raise ValueError(f"Projection radius must be positive, got {D}")
    assert 0 < tol <= 1e-4, f"tol must be in (0, 1e-4], got {tol}"
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("Cannot project a non-finite point")
    if np.linalg.norm(x) <= D * (1 + BOUNDARY_GRACE):
        return x.copy()
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("Projection weight has non-finite entries")
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise NotPositiveDefiniteError("Projection weight is not symmetric")
    eigvals, V = eigh(M)
    if eigvals[0] <= 0:
        raise NotPositiveDefiniteError(f"Projection weight is not positive definite (min eigenvalue {eigvals[0]})")
    c = V.T @ x
    mu = secular_root(eigvals, c, D, tol)
    return V @ (eigvals * c / (eigvals + mu))


def weighted_objective(M, x, w) -> float:
    d = np.asarray(x, dtype=float) - np.asarray(w, dtype=float)
    return float(d @ np.asarray(M, dtype=float) @ d)
