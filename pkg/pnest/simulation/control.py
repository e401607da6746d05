"""
Feedback gain from the discrete-time Riccati equation and the excitation policies of the
closed loop u_t = s K x_t + eps_t (s = -1 by default, see Controller).
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..common.errors import DareConvergenceError, DimensionError
from ..common.utils import as_matrix

EXCITATION_KINDS = ("zero", "iid_sphere", "decaying_sphere")
FEEDBACK_SIGNS = {"negative": -1.0, "positive": 1.0}


def dare_solve(A, B, Q=None, R=None, tol: float = 1e-12, max_iter: int = 100000):
    """Iterate the Riccati recursion to its fixed point and return the LQR gain.

    S <- A^T S A - A^T S B (R + B^T S B)^{-1} B^T S A + Q, starting from S_0 = Q, until
    ||S_{k+1} - S_k|| <= tol ||S_k||.

    Args:
        A: n x n, B: n x m
        Q: n x n PSD state weight, identity by default
        R: m x m PD input weight, identity by default
    Returns:
        (K, S): gain K = (R + B^T S B)^{-1} B^T S A, stabilizing under u = -K x, and S
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    A = as_matrix(A, n, n, "A")
    Q = np.eye(n) if Q is None else as_matrix(Q, n, n, "Q")
    R = np.eye(m) if R is None else as_matrix(R, m, m, "R")
    S = Q.copy()
    for _ in range(max_iter):
        BtSA = B.T @ S @ A
        S_next = A.T @ S @ A - BtSA.T @ np.linalg.solve(R + B.T @ S @ B, BtSA) + Q
        S_next = 0.5 * (S_next + S_next.T)
        if not np.all(np.isfinite(S_next)):
            break
        if np.linalg.norm(S_next - S) <= tol * np.linalg.norm(S):
            S = S_next
            K = np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
            return K, S
        S = S_next
    raise DareConvergenceError(
        f"Riccati iteration did not converge within {max_iter} iterations; (A, B) is likely not stabilizable")


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def sample_unit_sphere(rng, m: int) -> np.ndarray:
    """Uniform direction on the unit sphere of R^m (a normalized standard Gaussian vector)."""
    if m < 1:
        raise DimensionError(f"Sphere dimension must be >= 1, got {m}")
    while True:
        v = rng.standard_normal(m)
        norm = np.linalg.norm(v)
        if norm > 0:
            return v / norm


def decay_schedule(t: int) -> float:
    """t^{-1/4} sqrt(log t) for t >= 1."""
    if t < 1:
        raise ValueError(f"Excitation time index starts at 1, got {t}")
    return t ** -0.25 * np.sqrt(np.log(t))


def excitation_bound(kind: str) -> float:
    """Uniform bound on ||eps_t|| for the given excitation kind."""
    if kind == "zero":
        return 0.0
    if kind == "iid_sphere":
        return 1.0
    if kind == "decaying_sphere":
        # maximum of t^{-1/4} sqrt(log t), attained at log t = 2
        return float(np.sqrt(2.0) * np.exp(-0.5))
    raise ValueError(f"Unknown excitation kind {kind!r}, choose from {EXCITATION_KINDS}")


def make_excitation(kind: str, rng, m: int) -> Callable[[int], np.ndarray]:
    """Build the excitation signal t -> eps_t, with t counted from 1.

    Args:
        kind: "zero", "iid_sphere" or "decaying_sphere"
        rng: numpy Generator owned by this signal
        m: input dimension
    """
    if kind == "zero":
        return lambda t: np.zeros(m)
    if kind == "iid_sphere":
        return lambda t: sample_unit_sphere(rng, m)
    if kind == "decaying_sphere":
        # the direction is drawn at t = 1 too, so the stream stays aligned with iid_sphere
        return lambda t: decay_schedule(t) * sample_unit_sphere(rng, m)
    raise ValueError(f"Unknown excitation kind {kind!r}, choose from {EXCITATION_KINDS}")


@dataclass
class Controller:
    """Static feedback pi(x) = sign * K x plus an excitation signal."""
    K: np.ndarray
    excitation: str = "zero"
    feedback_sign: str = "negative"

    def __post_init__(self):
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if self.excitation not in EXCITATION_KINDS:
            raise ValueError(f"Unknown excitation kind {self.excitation!r}, choose from {EXCITATION_KINDS}")
        if self.feedback_sign not in FEEDBACK_SIGNS:
            raise ValueError(f"feedback_sign must be one of {sorted(FEEDBACK_SIGNS)}")

    @property
    def sign(self) -> float:
        return FEEDBACK_SIGNS[self.feedback_sign]

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.K, 2))

    def policy(self, x) -> np.ndarray:
        return self.sign * self.K @ np.asarray(x, dtype=float)

    def closed_loop_matrix(self, A, B) -> np.ndarray:
        return np.asarray(A, dtype=float) + self.sign * np.asarray(B, dtype=float).reshape(len(A), -1) @ self.K

    def excitation_signal(self, rng) -> Callable[[int], np.ndarray]:
        return make_excitation(self.excitation, rng, self.m)
