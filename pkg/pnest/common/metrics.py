"""
Evaluation quantities of an online run: regret, parameter error, Lyapunov value,
excitation diagnostics, and the trend statistics computed from them.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigvalsh

from .errors import DimensionError, NotPositiveDefiniteError
from .utils import read_csv, write_csv

METRIC_COLUMNS = ["t", "regret_cum", "avg_regret", "param_err", "lyapunov",
                  "lambda_min", "lambda_max", "logdet", "grad_energy"]
PREDICTION_COLUMNS = ["t", "pred_err", "pred_err_cum", "avg_pred_err"]
FULL_SERIES_LIMIT = 100000
THINNING_RATIO = 1.05
TREND_MIN_T = 100


def regret_increment(model, theta_star, theta_hat, y_t, u_t, t: int = 0) -> float:
    """||h(theta*, y_t, u_t) - h(theta_hat_t, y_t, u_t)||^2, the loss at theta_hat_t."""
    psi = model.h(theta_star, y_t, u_t, t) - model.h(theta_hat, y_t, u_t, t)
    return float(psi @ psi)


def excitation_diagnostics(P_inv) -> Tuple[float, float, float]:
    """Eigenvalue extremes and log-determinant of P^{-1}.

    Returns:
        (lambda_min, lambda_max, logdet)
    """
    eigs = eigvalsh(np.asarray(P_inv, dtype=float))
    if eigs[0] <= 0:
        raise NotPositiveDefiniteError(f"P_inv is not positive definite (min eigenvalue {eigs[0]})")
    return float(eigs[0]), float(eigs[-1]), float(np.sum(np.log(eigs)))


def lyapunov_value(theta_star, theta_hat, P_inv) -> float:
    """V = theta_tilde^T P^{-1} theta_tilde with theta_tilde = theta* - theta_hat."""
    err = np.asarray(theta_star, dtype=float) - np.asarray(theta_hat, dtype=float)
    P_inv = np.asarray(P_inv, dtype=float)
    if P_inv.shape != (err.shape[0], err.shape[0]):
        raise DimensionError(f"P_inv has shape {P_inv.shape}, expected {(err.shape[0],) * 2}")
    return float(err @ P_inv @ err)


def trend_fit(t, values, window: Optional[Tuple[float, float]] = None) -> float:
    """Least-squares slope of log(value) against log(t) over a window.

    Args:
        t: time indices
        values: positive values, same length as t
        window: inclusive [t_lo, t_hi]; the whole series if None
    Returns:
        slope (float)
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    assert t.shape == values.shape, f"t {t.shape} and values {values.shape} should have the same shape"
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
        t, values = t[mask], values[mask]
    if t.shape[0] < 10:
        raise ValueError(f"trend_fit needs at least 10 points in the window, got {t.shape[0]}")
    if np.any(values <= 0) or np.any(t <= 0):
        raise ValueError("trend_fit needs positive times and values; filter zeros first")
    slope, _ = np.polyfit(np.log(t), np.log(values), 1)
    return float(slope)


def checkpoint_times(T: int, full_limit: int = FULL_SERIES_LIMIT, ratio: float = THINNING_RATIO) -> np.ndarray:
    """Time indices 1..T to record: all of them up to full_limit, then rounded powers of ratio, then T."""
    if T <= full_limit:
        return np.arange(1, T + 1)
    times = set(range(1, full_limit + 1))
    k = math.ceil(math.log(full_limit) / math.log(ratio))
    while True:
        tk = int(round(ratio ** k))
        if tk > T:
            break
        times.add(tk)
        k += 1
    times.add(T)
    return np.array(sorted(times))


@dataclass
class MetricsSeries:
    """Per-step metrics of one rollout; single writer."""
    rows: List[List[float]] = field(default_factory=list)
    regret_cum: float = 0.0
    grad_energy: float = 0.0
    record_times: Optional[set] = None

    def step(self, t: int, regret_inc: float, phi_sq_norm: float, theta_star, theta_hat, P_inv):
        """Accumulate one step and record the row for time t if it is a checkpoint."""
        self.regret_cum += regret_inc
        self.grad_energy += phi_sq_norm
        if self.record_times is not None and t not in self.record_times:
            return
        err = np.asarray(theta_star, dtype=float) - np.asarray(theta_hat, dtype=float)
        lam_min, lam_max, logdet = excitation_diagnostics(P_inv)
        self.rows.append([
            t, self.regret_cum, self.regret_cum / t, float(err @ err),
            lyapunov_value(theta_star, theta_hat, P_inv), lam_min, lam_max, logdet, self.grad_energy])

    def __len__(self):
        return len(self.rows)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(METRIC_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, METRIC_COLUMNS.index(name)]

    def to_csv(self, path):
        write_csv(path, METRIC_COLUMNS, self.as_array())

    @classmethod
    def from_csv(cls, path) -> "MetricsSeries":
        header, rows = read_csv(path)
        if header != METRIC_COLUMNS:
            raise ValueError(f"Unexpected metrics header {header}")
        series = cls(rows=rows.tolist())
        if len(rows):
            series.regret_cum = float(rows[-1, 1])
            series.grad_energy = float(rows[-1, -1])
        return series


def aggregate_runs(arrays: Sequence[np.ndarray]) -> Tuple[List[str], np.ndarray]:
    """Per-t median, min and max across seeds.

    Args:
        arrays: metrics arrays with METRIC_COLUMNS layout, recorded at the same times
    Returns:
        (header, rows) for the aggregate CSV
    """
    assert len(arrays) > 0, "Nothing to aggregate"
    stacked = np.stack([np.asarray(a, dtype=float) for a in arrays])
    assert np.all(stacked[:, :, 0] == stacked[0:1, :, 0]), "Runs were recorded at different times"
    header = ["t"]
    columns = [stacked[0, :, 0]]
    for j, name in enumerate(METRIC_COLUMNS[1:], start=1):
        header += [f"{name}_median", f"{name}_min", f"{name}_max"]
        columns += [np.median(stacked[:, :, j], axis=0), stacked[:, :, j].min(axis=0), stacked[:, :, j].max(axis=0)]
    return header, np.column_stack(columns)


def _value_at(t, values, t0):
    idx = np.searchsorted(t, t0)
    return float(values[min(idx, len(values) - 1)])


def _max_ratio_after(t, values, t0):
    base = _value_at(t, values, t0)
    mask = t >= t0
    if base <= 0 or not np.any(mask):
        return None
    return float(np.max(values[mask]) / base)


def summarize_aggregate(header: List[str], rows: np.ndarray) -> Dict[str, Optional[float]]:
    """Trend statistics of a median aggregate.

    Every entry is None when the run is too short for it.
    """
    col = {name: rows[:, i] for i, name in enumerate(header)}
    t = col["t"]
    T = float(t[-1]) if len(t) else 0.0
    summary: Dict[str, Optional[float]] = {"T": T}
    avg_regret = col["avg_regret_median"]
    param_err = col["param_err_median"]
    summary["final_param_err_median"] = float(param_err[-1]) if len(t) else None
    summary["final_avg_regret_median"] = float(avg_regret[-1]) if len(t) else None
    summary["avg_regret_ratio_100_to_T"] = None
    if T >= TREND_MIN_T and _value_at(t, avg_regret, TREND_MIN_T) > 0:
        summary["avg_regret_ratio_100_to_T"] = float(avg_regret[-1] / _value_at(t, avg_regret, TREND_MIN_T))
    for name, values in (("avg_regret", avg_regret), ("param_err", param_err)):
        key = f"{name}_slope_1e3_to_T"
        summary[key] = None
        mask = (t >= 1000) & (values > 0)
        if np.count_nonzero(mask) >= 10:
            summary[key] = trend_fit(t[mask], values[mask])
    lam = col["lambda_min_median"]
    summary["lambda_min_growth_T10_to_T"] = None
    if T >= 10 * TREND_MIN_T:
        summary["lambda_min_growth_T10_to_T"] = float(lam[-1] / _value_at(t, lam, T / 10))
    summary["max_lyapunov_over_log_energy_ratio"] = None
    summary["max_regret_over_log_t_ratio"] = None
    if T >= 1000:
        ratio = col["lyapunov_median"] / np.log(col["grad_energy_median"] + math.e)
        summary["max_lyapunov_over_log_energy_ratio"] = _max_ratio_after(t, ratio, 1000)
        log_t = np.log(np.where(t > 1, t, math.e))
        summary["max_regret_over_log_t_ratio"] = _max_ratio_after(t, col["regret_cum_median"] / log_t, 1000)
    return summary
