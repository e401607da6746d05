"""
Closed-loop trajectories of x_{t+1} = h(theta*, x_t, u_t) + w_{t+1}, y_{t+1} = x_{t+1},
under u_t = pi(x_t) + eps_t, and the online identification loop on top of them.
"""
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np
from tqdm import tqdm

from ..common.errors import DimensionError, NonFiniteError, SimulationError
from ..common.metrics import MetricsSeries, checkpoint_times, regret_increment
from ..common.utils import as_vector, read_csv, spawn_streams, write_csv
from ..estimator.algorithm import EstimatorState, update
from ..models.dynamics import SystemModel
from .control import Controller, excitation_bound, sample_unit_sphere
from .noise import NoiseSpec

# a state beyond this norm means the closed loop is unstable
STATE_OVERFLOW = 1e12


@dataclass
class TrajectorySample:
    t: int
    x: np.ndarray
    u: np.ndarray
    y_next: np.ndarray
    w_next: np.ndarray


def trajectory_header(n: int, m: int) -> List[str]:
    return (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)]
            + [f"y_{i + 1}" for i in range(n)] + [f"w_{i + 1}" for i in range(n)])


def step_system(model: SystemModel, theta_star, x_t, u_t, w_next=None, t: int = 0, latent=None) -> np.ndarray:
    """One transition x_{t+1} = h(theta*, x_t, u_t) + w_{t+1}.

    Args:
        model: the system family
        theta_star: true parameter
        x_t, u_t: current state and input
        w_next: additive noise (ignored when `latent` is given)
        t: time index
        latent: for binary_probit only, the latent Gaussian draw v_{t+1}; the state becomes
            the indicator of A x + B u + v > c_t and the noise is the residual x_{t+1} - h
    Returns:
        x_next (np.ndarray)
    """
    if latent is not None:
        if model.kind != "binary_probit":
            raise ValueError("Latent indicator dynamics are only defined for binary_probit")
        z, _, _ = model.pre_activation(theta_star, x_t, u_t, t)
        return (z + as_vector(latent, model.dims.n, "latent") > 0).astype(float)
    h = model.h(theta_star, x_t, u_t, t)
    if w_next is None:
        return h
    return h + as_vector(w_next, model.dims.n, "w_next")


def iter_rollout(model: SystemModel, theta_star, controller: Controller, noise: NoiseSpec, x0, T: int,
                 rng_seed: int) -> Iterator[TrajectorySample]:
    """Generate the closed loop one sample at a time; see `rollout`."""
    if T < 1:
        raise ValueError(f"Horizon T must be >= 1, got {T}")
    n, m = model.dims.n, model.dims.m
    if controller.K.shape != (m, n):
        raise DimensionError(f"Gain K has shape {controller.K.shape}, expected {(m, n)}")
    if noise.kind == "bernoulli_residual" and model.kind != "binary_probit":
        raise ValueError("bernoulli_residual noise needs the binary_probit model")
    streams = spawn_streams(rng_seed)
    excitation = controller.excitation_signal(streams["excitation"])
    x = np.zeros(n) if x0 is None else as_vector(x0, n, "x0")
    for t in range(T):
        # excitation schedules count time from 1
        u = controller.policy(x) + excitation(t + 1)
        mean = model.h(theta_star, x, u, t)
        if noise.kind == "bernoulli_residual":
            x_next = step_system(model, theta_star, x, u, t=t, latent=streams["latent"].standard_normal(n))
        else:
            x_next = mean + noise.sample(streams["process_noise"], n)
        if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > STATE_OVERFLOW:
            raise SimulationError("State overflow, the closed loop looks unstable", step=t)
        yield TrajectorySample(t=t, x=x, u=u, y_next=x_next, w_next=x_next - mean)
        x = x_next


def rollout(model: SystemModel, theta_star, controller: Controller, noise: NoiseSpec, x0, T: int,
            rng_seed: int) -> List[TrajectorySample]:
    """Simulate T closed-loop steps with u_t = sign K x_t + eps_t.

    Deterministic given the arguments: the root seed spawns independent streams for the
    process noise, the excitation and the latent probit noise.
    """
    return list(iter_rollout(model, theta_star, controller, noise, x0, T, rng_seed))


def closed_loop_identify(model: SystemModel, theta_star, estimator: EstimatorState, controller: Controller,
                         noise: NoiseSpec, x0, T: int, rng_seed: int,
                         metrics_sink: Optional[MetricsSeries] = None, full_series_limit: int = 100000,
                         trajectory_sink: Optional[list] = None, progress: bool = False):
    """Run the estimator online along a closed-loop rollout.

    At every step the regret increment is measured at the current estimate, then the
    estimator is updated with the new observation and the metrics row is recorded.

    Args:
        estimator: updated in place
        metrics_sink: series to append to, a new one by default
        full_series_limit: record every step up to this horizon, thinned checkpoints beyond
        trajectory_sink: if given, every TrajectorySample is appended to it
    Returns:
        (estimator, MetricsSeries)
    """
    if estimator.p != model.dims.p:
        raise DimensionError(f"Estimator has p={estimator.p}, model has p={model.dims.p}")
    theta_star = as_vector(theta_star, model.dims.p, "theta_star")
    metrics = metrics_sink if metrics_sink is not None else MetricsSeries()
    if T > full_series_limit:
        metrics.record_times = set(checkpoint_times(T, full_series_limit).tolist())
    samples = iter_rollout(model, theta_star, controller, noise, x0, T, rng_seed)
    for sample in tqdm(samples, total=T, desc="closed loop", disable=not progress):
        increment = regret_increment(model, theta_star, estimator.theta_hat, sample.x, sample.u, estimator.t)
        estimator, diagnostics = update(estimator, model, sample.x, sample.u, sample.y_next)
        metrics.step(sample.t + 1, increment, diagnostics.phi_sq_norm, theta_star, estimator.theta_hat,
                     estimator.P_inv)
        if trajectory_sink is not None:
            trajectory_sink.append(sample)
    return estimator, metrics


@dataclass
class RhoProbeReport:
    rho_hat: float
    flagged: bool
    worst_x: np.ndarray
    worst_u: np.ndarray
    norm_choice: str

    def to_dict(self):
        return {"rho_hat": self.rho_hat, "flagged": self.flagged, "worst_x": self.worst_x.tolist(),
                "worst_u": self.worst_u.tolist(), "norm_choice": self.norm_choice}


_NORMS = {"l1": 1, "l2": 2, "linf": np.inf}


def rho_probe(model: SystemModel, theta_star, controller: Controller, sample_count: int, radius: float,
              norm_choice: str = "l1", rng_seed: int = 0, t: int = 0) -> RhoProbeReport:
    """Estimate rho = max ||h(theta*, x, u)|| / ||x|| over sampled states.

    States are drawn with norm in (0, radius]; inputs are u = pi(x) + eps with eps on the
    excitation envelope. A diagnostic, not a certificate: rho_hat >= 1 raises the flag.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if norm_choice not in _NORMS:
        raise ValueError(f"norm_choice must be one of {sorted(_NORMS)}")
    order = _NORMS[norm_choice]
    n, m = model.dims.n, model.dims.m
    rng = np.random.default_rng(rng_seed)
    envelope = excitation_bound(controller.excitation)
    rho_hat, worst_x, worst_u = 0.0, np.zeros(n), np.zeros(m)
    for _ in range(sample_count):
        direction = sample_unit_sphere(rng, n)
        x = direction / np.linalg.norm(direction, order) * radius * (1.0 - rng.random())
        eps = envelope * sample_unit_sphere(rng, m) if envelope > 0 else np.zeros(m)
        u = controller.policy(x) + eps
        ratio = np.linalg.norm(model.h(theta_star, x, u, t), order) / np.linalg.norm(x, order)
        if ratio > rho_hat:
            rho_hat, worst_x, worst_u = float(ratio), x, u
    return RhoProbeReport(rho_hat=rho_hat, flagged=rho_hat >= 1.0, worst_x=worst_x, worst_u=worst_u,
                          norm_choice=norm_choice)


def save_trajectory(samples: List[TrajectorySample], path, n: int, m: int):
    rows = [np.concatenate([[s.t], s.x, s.u, s.y_next, s.w_next]) for s in samples]
    write_csv(path, trajectory_header(n, m), np.asarray(rows).reshape(-1, 1 + 3 * n + m))


def load_trajectory(path, n: int, m: int) -> List[TrajectorySample]:
    """Read a trajectory CSV in the export format; the header must match n and m exactly."""
    header, rows = read_csv(path)
    expected = trajectory_header(n, m)
    if header != expected:
        raise DimensionError(f"Trajectory header {header} does not match {expected}")
    if not np.all(np.isfinite(rows)):
        raise NonFiniteError(f"Trajectory {path} has non-finite entries")
    samples = []
    for row in rows:
        samples.append(TrajectorySample(
            t=int(row[0]), x=row[1:1 + n], u=row[1 + n:1 + n + m], y_next=row[1 + n + m:1 + 2 * n + m],
            w_next=row[1 + 2 * n + m:]))
    return samples


__all__ = ["TrajectorySample", "RhoProbeReport", "step_system", "iter_rollout", "rollout",
           "closed_loop_identify", "rho_probe", "save_trajectory", "load_trajectory",
           "trajectory_header"]
