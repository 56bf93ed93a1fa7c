"""Ground truth for the toy problems, error metrics and order estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predictor import GaussianProblem, NoisePredictor
from .schedule import NoiseSchedule, lambda_to_alpha_sigma

ERROR_FLOOR = 1e-13
DEFAULT_N_FINE = 20_000


@dataclass(frozen=True)
class ErrorReport:
    solver_name: str
    rms_error: float
    nfe: int
    h_max: float


def gaussian_flow_exact(sched: NoiseSchedule, prob: GaussianProblem, x_s, s: float, t: float):
    """Exact ODE flow map from time s to time t for data N(mu0, s0^2 I).

    The deviation from the mean ``alpha * mu0`` is scaled by the ratio of
    marginal standard deviations.
    """
    x_s = np.asarray(x_s, dtype=np.float64)
    if s == t:
        return x_s.copy()
    a_s, sig_s = sched.alpha_sigma(s)
    a_t, sig_t = sched.alpha_sigma(t)
    v_s = prob.marginal_var(a_s, sig_s)
    v_t = prob.marginal_var(a_t, sig_t)
    return a_t * prob.mu0 + np.sqrt(v_t / v_s) * (x_s - a_s * prob.mu0)


def reference_solve(
    p: NoisePredictor, sched: NoiseSchedule, x_T, T: float, eps: float, n_fine: int = DEFAULT_N_FINE
):
    """Classical RK4 on the lambda-domain ODE with ``n_fine`` uniform lambda steps."""
    if n_fine < 1000:
        raise ValueError("n_fine must be at least 1000 for a trustworthy reference")
    lam0, lam1 = float(sched.half_log_snr(T)), float(sched.half_log_snr(eps))
    h = (lam1 - lam0) / n_fine
    # nodes at every half step so the stage times are computed once
    lam_half = lam0 + 0.5 * h * np.arange(2 * n_fine + 1)
    t_half = sched.time_of_lambda(lam_half)
    t_half[0], t_half[-1] = T, eps
    _, sig_half = lambda_to_alpha_sigma(lam_half)
    eval_fn = p.eval_fn

    def field(y, j):
        sg = sig_half[j]
        return sg * sg * y - sg * eval_fn(y, t_half[j])

    x = np.asarray(x_T, dtype=np.float64).copy()
    for i in range(n_fine):
        j = 2 * i
        k1 = field(x, j)
        k2 = field(x + 0.5 * h * k1, j + 1)
        k3 = field(x + 0.5 * h * k2, j + 1)
        k4 = field(x + h * k3, j + 2)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    p.nfe += 4 * n_fine
    return x


def rms_error(a, b) -> float:
    """||a - b||_2 / sqrt(D), over all entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def estimate_order(hs, errors, floor: float = ERROR_FLOOR) -> float:
    """Least-squares slope of log(error) against log(h).

    Points whose error is below ``floor`` are dropped first; at least three
    must remain.
    """
    hs = np.asarray(hs, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if hs.shape != errors.shape:
        raise ValueError("hs and errors must have the same length")
    if np.any(hs <= 0):
        raise ValueError("step sizes must be positive")
    keep = errors > floor
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 points above the {floor:g} error floor, have {keep.sum()}")
    slope, _ = np.polyfit(np.log(hs[keep]), np.log(errors[keep]), 1)
    return float(slope)
