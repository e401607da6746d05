"""
The projected Newton-type online estimator.

At every step, with phi_t the parameter Jacobian at the current estimate,

    P_{t+1}      = P_t - eta_t^2 P_t phi_t Gamma_t phi_t^T P_t
    Gamma_t      = (I + eta_t^2 phi_t^T P_t phi_t)^{-1}
    eta_t        = 1 / (1/alpha_t + 2 beta ||phi_t^T P_{t+1} phi_t||)
    theta_{t+1}  = Proj_{P_{t+1}^{-1}} { theta_t + eta_t P_{t+1} phi_t (y_{t+1} - h(theta_t, y_t, u_t)) }

with alpha_t = alpha(||y_t|| + ||u_t|| + D). The inverse P^{-1} is carried along through
P_{t+1}^{-1} = P_t^{-1} + eta_t^2 phi_t phi_t^T.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigvalsh

from ..common.errors import DimensionError, NonFiniteError, NotPositiveDefiniteError, SimulationError
from ..common.utils import as_vector, jdump, jload, symmetrize
from ..models.dynamics import SystemModel
from .projection import DEFAULT_TOL, project_weighted_ball

STEP_MODES = ("implicit_fixed_point", "explicit_conservative")
CONSISTENCY_THRESHOLD = 1e-6


@dataclass
class EstimatorState:
    theta_hat: np.ndarray
    P: np.ndarray
    P_inv: np.ndarray
    D: float
    beta: float = 1.0
    t: int = 0
    step_mode: str = "implicit_fixed_point"
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    projection_tol: float = DEFAULT_TOL
    # run inverse_consistency_check every this many updates, 0 disables it
    consistency_every: int = 1000
    refactorizations: int = field(default=0, compare=False)

    @property
    def p(self) -> int:
        return self.theta_hat.shape[0]

    def copy(self) -> "EstimatorState":
        return EstimatorState(
            theta_hat=self.theta_hat.copy(), P=self.P.copy(), P_inv=self.P_inv.copy(),
            D=self.D, beta=self.beta, t=self.t, step_mode=self.step_mode, fp_tol=self.fp_tol,
            fp_max_iter=self.fp_max_iter, projection_tol=self.projection_tol,
            consistency_every=self.consistency_every, refactorizations=self.refactorizations)

    def to_dict(self) -> dict:
        """Flat JSON-ready record; floats keep their shortest round-trip repr."""
        return {
            "t": self.t,
            "theta_hat": self.theta_hat.tolist(),
            "P": self.P.reshape(-1).tolist(),
            "P_inv": self.P_inv.reshape(-1).tolist(),
            "D": self.D,
            "beta": self.beta,
            "mode": self.step_mode,
            "fp_tol": self.fp_tol,
            "fp_max_iter": self.fp_max_iter,
            "projection_tol": self.projection_tol,
            "consistency_every": self.consistency_every,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "EstimatorState":
        theta = np.asarray(record["theta_hat"], dtype=float)
        p = theta.shape[0]
        P = np.asarray(record["P"], dtype=float)
        P_inv = np.asarray(record["P_inv"], dtype=float)
        if P.size != p * p or P_inv.size != p * p:
            raise DimensionError(f"Snapshot matrices do not match p = {p}")
        return cls(
            theta_hat=theta, P=P.reshape(p, p), P_inv=P_inv.reshape(p, p), D=float(record["D"]),
            beta=float(record["beta"]), t=int(record["t"]), step_mode=record["mode"],
            fp_tol=float(record.get("fp_tol", 1e-10)), fp_max_iter=int(record.get("fp_max_iter", 50)),
            projection_tol=float(record.get("projection_tol", DEFAULT_TOL)),
            consistency_every=int(record.get("consistency_every", 1000)))


@dataclass
class StepDiagnostics:
    eta: float
    alpha_t: float
    gain_norm: float
    fp_iters: int
    projection_active: bool
    innovation: np.ndarray
    prediction: np.ndarray
    phi_sq_norm: float


class StepSize(NamedTuple):
    eta: float
    P_next: np.ndarray
    Gamma: np.ndarray
    fp_iters: int
    gain_norm: float


def save_state(state: EstimatorState, path):
    jdump(state.to_dict(), path)


def load_state(path) -> EstimatorState:
    return EstimatorState.from_dict(jload(path))


def new_estimator(model: SystemModel, theta0=None, D: float = 2.0, step_mode: str = "implicit_fixed_point",
                  fp_tol: float = 1e-10, fp_max_iter: int = 50, beta: Optional[float] = None,
                  projection_tol: float = DEFAULT_TOL, consistency_every: int = 1000) -> EstimatorState:
    """Start the estimator with P_0 = I.

    Args:
        model: the system family, supplies p and beta
        theta0: initial estimate, zeros by default; projected into the D-ball if outside
        D: radius of the feasible ball
        step_mode: "implicit_fixed_point" or "explicit_conservative"
        fp_tol: fixed-point tolerance, relative to alpha_t
        fp_max_iter: fixed-point iteration cap
        beta: overrides the model's beta
    """
    if not D > 0:
        raise ValueError(f"Feasible radius D must be positive, got {D}")
    if step_mode not in STEP_MODES:
        raise ValueError(f"step_mode must be one of {STEP_MODES}, got {step_mode!r}")
    p = model.dims.p
    theta0 = np.zeros(p) if theta0 is None else as_vector(theta0, p, "theta0")
    eye = np.eye(p)
    # P_0 = I, so the initial projection is the Euclidean one
    theta0 = project_weighted_ball(eye, theta0, D, projection_tol)
    return EstimatorState(
        theta_hat=theta0, P=eye.copy(), P_inv=eye.copy(), D=float(D),
        beta=float(model.beta if beta is None else beta), step_mode=step_mode,
        fp_tol=fp_tol, fp_max_iter=fp_max_iter, projection_tol=projection_tol,
        consistency_every=consistency_every)


def _gain_norm(S_eigs, eta):
    # ||phi^T P_{t+1}(eta) phi|| = max_j s_j / (1 + eta^2 s_j), with s_j the eigenvalues of phi^T P phi
    if S_eigs.size == 0:
        return 0.0
    return float(np.max(S_eigs / (1.0 + eta * eta * S_eigs)))


def step_size_iterates(S_eigs, alpha_t: float, beta: float, fp_tol: float, fp_max_iter: int) -> Iterator[float]:
    """Yield the fixed-point iterates eta^0, eta^1, ... of eta = 1 / (1/alpha_t + 2 beta m(eta)).

    The sequence starts at g(0) and is non-decreasing; it stops once two consecutive
    iterates differ by at most fp_tol * alpha_t or after fp_max_iter updates.
    """
    eta = 1.0 / (1.0 / alpha_t + 2.0 * beta * _gain_norm(S_eigs, 0.0))
    yield eta
    for _ in range(fp_max_iter):
        nxt = 1.0 / (1.0 / alpha_t + 2.0 * beta * _gain_norm(S_eigs, eta))
        yield nxt
        if abs(nxt - eta) <= fp_tol * alpha_t:
            return
        eta = nxt


def solve_step_size(phi, P, alpha_t: float, beta: float, mode: str = "implicit_fixed_point",
                    fp_tol: float = 1e-10, fp_max_iter: int = 50) -> StepSize:
    """Resolve the step size eta_t together with P_{t+1} and Gamma_t.

    Args:
        phi: Jacobian, p x n
        P: current P_t, symmetric positive definite
        alpha_t: alpha(||y_t|| + ||u_t|| + D)
        beta: self-bounding constant
        mode: "implicit_fixed_point" iterates eta = g(eta) through P_{t+1}(eta);
            "explicit_conservative" uses P_t in place of P_{t+1}
    Returns:
        StepSize(eta, P_next, Gamma, fp_iters, gain_norm)
    """
    if not alpha_t > 0:
        raise ValueError(f"alpha_t must be positive, got {alpha_t}")
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise NonFiniteError("Jacobian has non-finite entries")
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("P is not positive definite")
    n = phi.shape[1]
    P_phi = P @ phi
    S = symmetrize(phi.T @ P_phi)
    S_eigs = np.clip(eigvalsh(S), 0.0, None)
    fp_iters = 0
    if mode == "explicit_conservative":
        eta = 1.0 / (1.0 / alpha_t + 2.0 * beta * float(np.max(S_eigs, initial=0.0)))
    elif mode == "implicit_fixed_point":
        eta = eta_prev = None
        for fp_iters, iterate in enumerate(step_size_iterates(S_eigs, alpha_t, beta, fp_tol, fp_max_iter)):
            eta_prev, eta = eta, iterate
        # converging exactly on the last allowed iterate is not a cap hit
        if fp_iters >= fp_max_iter and (eta_prev is None or abs(eta - eta_prev) > fp_tol * alpha_t):
            logging.warning(f"Step-size fixed point stopped at fp_max_iter={fp_max_iter}")
    else:
        raise ValueError(f"Unknown step mode {mode!r}")
    Gamma = np.linalg.inv(np.eye(n) + eta * eta * S)
    P_next = symmetrize(P - eta * eta * P_phi @ Gamma @ P_phi.T)
    return StepSize(eta, P_next, Gamma, fp_iters, _gain_norm(S_eigs, eta))


def inverse_consistency_check(state: EstimatorState, threshold: float = CONSISTENCY_THRESHOLD) -> float:
    """Return ||P P_inv - I||_inf; above the threshold, P_inv is rebuilt from a factorization of P.

    Returns:
        the residual measured before any repair
    """
    p = state.p
    residual = float(np.linalg.norm(state.P @ state.P_inv - np.eye(p), np.inf))
    if residual > threshold:
        try:
            factor = cho_factor(state.P)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(f"P is numerically singular at step {state.t}")
        state.P_inv = symmetrize(cho_solve(factor, np.eye(p)))
        state.refactorizations += 1
        logging.warning(f"Refactorized P_inv at step {state.t}: residual {residual:.3e} > {threshold:.1e}")
    return residual


def predict(state: EstimatorState, model: SystemModel, y_t, u_t) -> np.ndarray:
    """One-step prediction h(theta_hat_t, y_t, u_t); does not touch the state."""
    return model.h(state.theta_hat, y_t, u_t, state.t)


def update(state: EstimatorState, model: SystemModel, y_t, u_t, y_next):
    """Advance the estimator by one observation.

    Args:
        state: estimator state, updated in place
        model: the system family
        y_t, u_t: current output and input
        y_next: the next output
    Returns:
        (state, StepDiagnostics)
    """
    n, m = model.dims.n, model.dims.m
    try:
        y_t = as_vector(y_t, n, "y_t")
        u_t = as_vector(u_t, m, "u_t")
        y_next = as_vector(y_next, n, "y_next")
    except NonFiniteError as e:
        raise SimulationError(f"Non-finite observation: {e}", step=state.t)
    t = state.t
    phi = model.jacobian(state.theta_hat, y_t, u_t, t)
    prediction = model.h(state.theta_hat, y_t, u_t, t)
    innovation = y_next - prediction
    alpha_t = model.alpha(np.linalg.norm(y_t) + np.linalg.norm(u_t) + state.D)
    step = solve_step_size(phi, state.P, alpha_t, state.beta, state.step_mode, state.fp_tol, state.fp_max_iter)
    eta = step.eta
    P_inv_next = symmetrize(state.P_inv + eta * eta * phi @ phi.T)
    P_next = step.P_next
    try:
        np.linalg.cholesky(P_next)
    except np.linalg.LinAlgError:
        logging.warning(f"P lost positive definiteness at step {t}, rebuilding it from P_inv")
        try:
            P_next = symmetrize(cho_solve(cho_factor(P_inv_next), np.eye(state.p)))
        except np.linalg.LinAlgError:
            raise SimulationError("P and P_inv are both numerically singular", step=t)
        state.refactorizations += 1
    theta_plus = state.theta_hat + eta * P_next @ (phi @ innovation)
    projected = project_weighted_ball(P_inv_next, theta_plus, state.D, state.projection_tol)
    projection_active = bool(np.linalg.norm(theta_plus) > state.D * (1 + 1e-12))
    state.theta_hat = projected
    state.P = P_next
    state.P_inv = P_inv_next
    state.t = t + 1
    if state.consistency_every and state.t % state.consistency_every == 0:
        inverse_consistency_check(state)
    diagnostics = StepDiagnostics(
        eta=eta, alpha_t=alpha_t, gain_norm=step.gain_norm, fp_iters=step.fp_iters,
        projection_active=projection_active, innovation=innovation, prediction=prediction,
        phi_sq_norm=float(np.sum(phi * phi)))
    return state, diagnostics
