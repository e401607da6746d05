"""
Empirical verification of the model properties the estimator relies on:
Jacobian correctness, the Assumption-4 inequalities and the gradient Lipschitz bound.
"""
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..common.utils import as_vector, sample_ball
from .dynamics import SystemModel

# violation tolerance: absolute floor plus a relative part
VIOLATION_ATOL = 1e-12
VIOLATION_RTOL = 1e-9
MAX_RECORDED_VIOLATIONS = 20


def check_jacobian_fd(model: SystemModel, theta, x, u, t: int = 0, step: float = 1e-5) -> float:
    """Compare the analytic Jacobian against central finite differences.

    Args:
        model: the system family
        theta, x, u: evaluation point
        t: time index (only the probit family uses it)
        step: finite-difference step, must be positive
    Returns:
        max over entries of |analytic - finite difference|
    """
    if step <= 0:
        raise ValueError(f"Finite-difference step must be positive, got {step}")
    theta = as_vector(theta, model.dims.p, "theta")
    analytic = model.jacobian(theta, x, u, t)
    numeric = np.empty_like(analytic)
    for k in range(model.dims.p):
        e = np.zeros_like(theta)
        e[k] = step
        numeric[k] = (model.h(theta + e, x, u, t) - model.h(theta - e, x, u, t)) / (2 * step)
    return float(np.max(np.abs(analytic - numeric)))


def assumption4_terms(model: SystemModel, theta_star, theta, y, u, t: int = 0):
    """Evaluate both sides of the secant inequality and the loss at one point.

    Returns:
        (inner, secant_rhs, loss): inner = <theta - theta*, grad L>,
        secant_rhs = ||phi^T (theta - theta*)||^2 (without the alpha factor),
        loss = ||h(theta*) - h(theta)||^2
    """
    psi = model.h(theta_star, y, u, t) - model.h(theta, y, u, t)
    phi = model.jacobian(theta, y, u, t)
    grad = -2.0 * phi @ psi
    delta = np.asarray(theta, dtype=float) - np.asarray(theta_star, dtype=float)
    return float(delta @ grad), float(np.sum((phi.T @ delta) ** 2)), float(psi @ psi)


@dataclass
class Assumption4Report:
    radius: float
    sample_count: int
    alpha: float
    beta: float
    secant_violations: List[dict] = field(default_factory=list)
    self_bound_violations: List[dict] = field(default_factory=list)
    num_secant_violations: int = 0
    num_self_bound_violations: int = 0
    worst_secant_margin: float = np.inf
    worst_self_bound_margin: float = np.inf
    required_beta: float = 0.0

    @property
    def ok(self) -> bool:
        return self.num_secant_violations == 0 and self.num_self_bound_violations == 0

    def to_dict(self):
        return {
            "radius": self.radius,
            "sample_count": self.sample_count,
            "alpha": self.alpha,
            "beta": self.beta,
            "num_secant_violations": self.num_secant_violations,
            "num_self_bound_violations": self.num_self_bound_violations,
            "worst_secant_margin": self.worst_secant_margin,
            "worst_self_bound_margin": self.worst_self_bound_margin,
            "required_beta": self.required_beta,
            "secant_violations": self.secant_violations,
            "self_bound_violations": self.self_bound_violations,
        }


def check_assumption4(model: SystemModel, theta_star, sample_count: int, radius: float,
                      rng_seed: int = 0, t: int = 0) -> Assumption4Report:
    """Sample the Assumption-4 inequalities around theta*.

    theta is drawn uniformly from the ball of the given radius around theta*, y and u
    uniformly from the balls of the same radius. For every sample the secant inequality
    <theta - theta*, grad L> >= alpha(r) ||phi^T (theta - theta*)||^2 and the
    self-bounding inequality L <= beta <theta - theta*, grad L> are evaluated.
    A report with violations is a valid return.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    theta_star = as_vector(theta_star, model.dims.p, "theta_star")
    rng = np.random.default_rng(rng_seed)
    alpha = model.alpha(radius)
    report = Assumption4Report(radius=radius, sample_count=sample_count, alpha=alpha, beta=model.beta)
    deltas = sample_ball(rng, model.dims.p, radius, sample_count)
    ys = sample_ball(rng, model.dims.n, radius, sample_count)
    us = sample_ball(rng, model.dims.m, radius, sample_count)
    for delta, y, u in zip(deltas, ys, us):
        theta = theta_star + delta
        inner, quad, loss = assumption4_terms(model, theta_star, theta, y, u, t)
        secant_margin = inner - alpha * quad
        self_bound_margin = model.beta * inner - loss
        report.worst_secant_margin = min(report.worst_secant_margin, secant_margin)
        report.worst_self_bound_margin = min(report.worst_self_bound_margin, self_bound_margin)
        if inner > 0:
            report.required_beta = max(report.required_beta, loss / inner)
        elif loss > VIOLATION_ATOL:
            report.required_beta = np.inf
        record = {"theta": theta.tolist(), "y": y.tolist(), "u": u.tolist()}
        if secant_margin < -(VIOLATION_ATOL + VIOLATION_RTOL * alpha * quad):
            report.num_secant_violations += 1
            if len(report.secant_violations) < MAX_RECORDED_VIOLATIONS:
                report.secant_violations.append(dict(record, margin=secant_margin))
        if self_bound_margin < -(VIOLATION_ATOL + VIOLATION_RTOL * loss):
            report.num_self_bound_violations += 1
            if len(report.self_bound_violations) < MAX_RECORDED_VIOLATIONS:
                report.self_bound_violations.append(dict(record, margin=self_bound_margin))
    logging.info(
        f"Assumption 4 ({model.kind}, r={radius}): {report.num_secant_violations} secant and "
        f"{report.num_self_bound_violations} self-bounding violations in {sample_count} samples")
    return report


def check_gradient_lipschitz(model: SystemModel, theta_star, sample_count: int, radius: float,
                             rng_seed: int = 0, t: int = 0) -> float:
    """Largest sampled ratio ||grad h(theta, xi_1) - grad h(theta, xi_2)|| / ||xi_1 - xi_2||.

    theta is drawn from the ball of the given radius around theta*, the regressors
    xi = [y; u] from balls of the same radius. The matrix norm is the spectral norm.
    """
    theta_star = as_vector(theta_star, model.dims.p, "theta_star")
    rng = np.random.default_rng(rng_seed)
    n, m = model.dims.n, model.dims.m
    worst = 0.0
    for _ in range(sample_count):
        theta = theta_star + sample_ball(rng, model.dims.p, radius)
        y1, y2 = sample_ball(rng, n, radius), sample_ball(rng, n, radius)
        u1, u2 = sample_ball(rng, m, radius), sample_ball(rng, m, radius)
        gap = np.sqrt(np.sum((y1 - y2) ** 2) + np.sum((u1 - u2) ** 2))
        if gap == 0:
            continue
        diff = model.jacobian(theta, y1, u1, t) - model.jacobian(theta, y2, u2, t)
        worst = max(worst, float(np.linalg.norm(diff, 2)) / gap)
    return worst
