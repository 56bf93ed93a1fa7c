"""Exponential-integrator solvers for the diffusion probability-flow ODE.

The linear part of the ODE is integrated exactly; only the noise-prediction
term is approximated, by a Taylor expansion in the half-log-SNR ``lambda``.
Steps of order 1, 2 and 3 cost 1, 2 and 3 predictor evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .predictor import NoisePredictor
from .schedule import NoiseSchedule

_SERIES_RADIUS = 1.0
_SERIES_TERMS = 24


class ConvergenceError(RuntimeError):
    pass


# -- phi functions -------------------------------------------------------------


def _phi_series(k: int, z):
    # sum_n z^n / (n+k)!, Horner from the tail
    acc = np.zeros_like(z)
    for n in range(_SERIES_TERMS - 1, -1, -1):
        acc = acc * z + 1.0 / math.factorial(n + k)
    return acc


def phi(k: int, z):
    """phi_k(z) = int_0^1 e^{(1-d) z} d^{k-1}/(k-1)! dd for k in {1, 2, 3}.

    Closed forms (via expm1) are used for |z| >= 1 and a truncated Taylor
    series inside the unit disc, where the closed forms lose digits to
    cancellation. Both branches are accurate to a few ulp.
    """
    if k not in (1, 2, 3):
        raise ValueError(f"phi_{k} not supported; k must be 1, 2 or 3")
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < _SERIES_RADIUS
    zc = np.where(small, 1.0, z)
    em1 = np.expm1(zc)
    if k == 1:
        closed = em1 / zc
    elif k == 2:
        closed = (em1 - zc) / zc**2
    else:
        closed = (em1 - zc - 0.5 * zc**2) / zc**3
    out = np.where(small, _phi_series(k, np.where(small, z, 0.0)), closed)
    return out[()] if out.ndim == 0 else out


# -- single steps ---------------------------------------------------------------


def _linear_part(sched, s, t):
    """Return lambda_s, h, alpha_t/alpha_s and sigma_t for a step s -> t."""
    if not t < s:
        if t == s:
            return None
        raise ValueError(f"steps run backward in time; got s={s}, t={t}")
    lam_s, lam_t = sched.half_log_snr(s), sched.half_log_snr(t)
    ratio = math.exp(sched.log_alpha(t) - sched.log_alpha(s))
    _, sigma_t = sched.alpha_sigma(t)
    return float(lam_s), float(lam_t - lam_s), ratio, float(sigma_t)


def _intermediate(sched, s, lam_s, r, h):
    """Time at lambda_s + r*h and its coefficients relative to s."""
    si = float(sched.time_of_lambda(lam_s + r * h))
    ratio = math.exp(sched.log_alpha(si) - sched.log_alpha(s))
    _, sigma_i = sched.alpha_sigma(si)
    return si, ratio, float(sigma_i)


def dpm1_step(p: NoisePredictor, sched: NoiseSchedule, x, s, t, eps_s=None):
    """First-order step (identical to a DDIM step). One NFE."""
    x = np.asarray(x, dtype=np.float64)
    lin = _linear_part(sched, s, t)
    if lin is None:
        return x.copy()
    _, h, ratio, sigma_t = lin
    if eps_s is None:
        eps_s = p(x, s)
    return ratio * x - sigma_t * math.expm1(h) * eps_s


def dpm2_step(p: NoisePredictor, sched: NoiseSchedule, x, s, t, r1: float = 0.5, eps_s=None):
    """Second-order step with one intermediate point at ``lambda_s + r1*h``. Two NFE."""
    if not 0 < r1 < 1:
        raise ValueError("r1 must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    lin = _linear_part(sched, s, t)
    if lin is None:
        return x.copy()
    lam_s, h, ratio, sigma_t = lin
    if eps_s is None:
        eps_s = p(x, s)
    s1, ratio1, sigma1 = _intermediate(sched, s, lam_s, r1, h)
    u = ratio1 * x - sigma1 * math.expm1(r1 * h) * eps_s
    d1 = p(u, s1) - eps_s
    em1 = math.expm1(h)
    return ratio * x - sigma_t * em1 * eps_s - sigma_t / (2 * r1) * em1 * d1


def _dpm3_with_lower(p, sched, x, s, t, r1, r2, eps_s):
    """Third-order update plus the second-order one built from the same evaluations."""
    lam_s, h, ratio, sigma_t = _linear_part(sched, s, t)
    if eps_s is None:
        eps_s = p(x, s)
    s1, ratio1, sigma1 = _intermediate(sched, s, lam_s, r1, h)
    s2, ratio2, sigma2 = _intermediate(sched, s, lam_s, r2, h)
    u1 = ratio1 * x - sigma1 * math.expm1(r1 * h) * eps_s
    d1 = p(u1, s1) - eps_s
    u2 = (
        ratio2 * x
        - sigma2 * math.expm1(r2 * h) * eps_s
        - sigma2 * r2 / r1 * (float(phi(1, r2 * h)) - 1.0) * d1
    )
    d2 = p(u2, s2) - eps_s
    em1 = math.expm1(h)
    base = ratio * x - sigma_t * em1 * eps_s
    x3 = base - sigma_t / r2 * (float(phi(1, h)) - 1.0) * d2
    x2 = base - sigma_t / (2 * r1) * em1 * d1
    return x3, x2


def dpm3_step(
    p: NoisePredictor, sched: NoiseSchedule, x, s, t, r1: float = 1 / 3, r2: float = 2 / 3, eps_s=None
):
    """Third-order step with intermediate points at ``r1`` and ``r2`` of the lambda step. Three NFE."""
    if not 0 < r1 < r2 < 1:
        raise ValueError("need 0 < r1 < r2 < 1")
    x = np.asarray(x, dtype=np.float64)
    if t == s:
        return x.copy()
    return _dpm3_with_lower(p, sched, x, s, t, r1, r2, eps_s)[0]


_STEPS = {1: dpm1_step, 2: dpm2_step, 3: dpm3_step}


def dpm_step(order: int, p, sched, x, s, t):
    try:
        step = _STEPS[order]
    except KeyError:
        raise ValueError(f"unsupported order {order}") from None
    return step(p, sched, x, s, t)


# -- grids and plans ------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Decreasing times ``T = t_0 > ... > t_M = eps`` with their lambda values."""

    times: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        lambdas = np.asarray(self.lambdas, dtype=np.float64)
        if times.ndim != 1 or times.shape != lambdas.shape or len(times) < 2:
            raise ValueError("grid needs at least two matching time/lambda points")
        if np.any(np.diff(times) >= 0):
            raise ValueError("grid times must be strictly decreasing")
        if np.any(np.diff(lambdas) <= 0):
            raise ValueError("grid lambdas must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.lambdas)

    @property
    def h_max(self) -> float:
        return float(self.steps.max())


def lambda_grid(sched: NoiseSchedule, lambdas: Sequence[float]) -> TimeGrid:
    """Grid through the given increasing lambda values."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    return TimeGrid(sched.time_of_lambda(lambdas), lambdas)


def uniform_lambda_grid(sched: NoiseSchedule, T: float, eps: float, M: int) -> TimeGrid:
    """M steps of equal size in lambda between T and eps; endpoints are kept exact."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 0 < eps < T <= sched.t_max:
        raise ValueError(f"need 0 < eps < T <= t_max, got eps={eps}, T={T}")
    lam_T, lam_eps = float(sched.half_log_snr(T)), float(sched.half_log_snr(eps))
    lambdas = lam_T + np.arange(M + 1) / M * (lam_eps - lam_T)
    lambdas[-1] = lam_eps
    times = sched.time_of_lambda(lambdas)
    times = np.atleast_1d(times).copy()
    times[0], times[-1] = T, eps
    return TimeGrid(times, lambdas)


@dataclass(frozen=True)
class StepPlan:
    """Per-segment solver orders; the NFE cost is their sum."""

    orders: tuple[int, ...]

    def __post_init__(self):
        orders = tuple(int(o) for o in self.orders)
        if not orders:
            raise ValueError("empty step plan")
        if any(o not in (1, 2, 3) for o in orders):
            raise ValueError(f"orders must be 1, 2 or 3: {orders}")
        object.__setattr__(self, "orders", orders)

    @classmethod
    def uniform(cls, order: int, M: int) -> "StepPlan":
        return cls((order,) * M)

    @property
    def n_segments(self) -> int:
        return len(self.orders)

    @property
    def nfe(self) -> int:
        return sum(self.orders)

    def __str__(self):
        return " ".join(map(str, self.orders))


def budget_plan(K: int) -> StepPlan:
    """Spend exactly K evaluations over floor(K/3)+1 equal lambda segments.

    Third-order steps are used as much as possible and the remainder is
    made up with one second- and/or first-order step at the end. K = 1 and
    K = 2 degenerate to a single first- or second-order step.
    """
    if K < 1:
        raise ValueError("NFE budget must be at least 1")
    M = K // 3 + 1
    R = K % 3
    if R == 0:
        orders = [3] * (M - 2) + [2, 1]
    elif R == 1:
        orders = [3] * (M - 1) + [1]
    else:
        orders = [3] * (M - 1) + [2]
    return StepPlan(tuple(orders))


# -- drivers --------------------------------------------------------------------


@dataclass
class StepRecord:
    t: float
    lam: float
    h: float
    accepted: bool = True
    error: float | None = None


@dataclass
class SolveResult:
    final_state: np.ndarray
    nfe: int
    accepted_steps: int
    rejected_steps: int = 0
    trace: list[StepRecord] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None
    h_max: float | None = None


def solve_fixed(
    p: NoisePredictor,
    sched: NoiseSchedule,
    x_T,
    T: float,
    eps: float,
    plan: StepPlan | Sequence[int],
    grid: TimeGrid | None = None,
    keep_iterates: bool = False,
) -> SolveResult:
    """Run the plan's orders over a uniform-lambda grid from T down to eps.

    A custom ``grid`` with ``len(plan)`` segments may be supplied instead.
    No final denoising step is applied.
    """
    if not isinstance(plan, StepPlan):
        plan = StepPlan(tuple(plan))
    if grid is None:
        grid = uniform_lambda_grid(sched, T, eps, plan.n_segments)
    elif grid.n_steps != plan.n_segments:
        raise ValueError("grid and plan disagree on the number of segments")
    x = np.asarray(x_T, dtype=np.float64).copy()
    start = p.nfe
    trace = []
    iterates = [x.copy()] if keep_iterates else None
    for i, order in enumerate(plan.orders):
        s, t = grid.times[i], grid.times[i + 1]
        x = dpm_step(order, p, sched, x, s, t)
        trace.append(StepRecord(float(t), float(grid.lambdas[i + 1]), float(grid.steps[i])))
        if keep_iterates:
            iterates.append(x.copy())
    return SolveResult(
        final_state=x,
        nfe=p.nfe - start,
        accepted_steps=plan.n_segments,
        trace=trace,
        iterates=iterates,
        h_max=grid.h_max,
    )


class AdaptivePair(str, Enum):
    ORDER12 = "12"
    ORDER23 = "23"

    @property
    def cost(self) -> int:
        return 2 if self is AdaptivePair.ORDER12 else 3

    @property
    def order(self) -> int:
        return 2 if self is AdaptivePair.ORDER12 else 3


@dataclass(frozen=True)
class AdaptiveConfig:
    """Tolerances for the embedded-pair step-size controller.

    ``batch_max`` only matters for 2-D input: the acceptance error is then
    the maximum over the rows instead of being computed over all entries.
    """

    rtol: float = 0.05
    atol: float = 0.0078
    h_init: float = 0.05
    theta: float = 0.9
    pair: AdaptivePair = AdaptivePair.ORDER12
    max_iter: int = 10_000
    end_tol: float = 1e-5
    batch_max: bool = True

    def __post_init__(self):
        object.__setattr__(self, "pair", AdaptivePair(self.pair))
        if min(self.rtol, self.atol, self.h_init, self.theta) <= 0 or self.theta >= 1:
            raise ValueError("adaptive config needs positive tolerances and 0 < theta < 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


def _scaled_error(x_lo, x_hi, x_prev, cfg: AdaptiveConfig) -> float:
    delta = np.maximum(cfg.atol, cfg.rtol * np.maximum(np.abs(x_lo), np.abs(x_prev)))
    ratio = (x_lo - x_hi) / delta
    if ratio.ndim >= 2 and cfg.batch_max:
        per_row = np.sqrt(np.mean(ratio.reshape(ratio.shape[0], -1) ** 2, axis=1))
        return float(per_row.max())
    return float(np.sqrt(np.mean(ratio**2)))


def solve_adaptive(
    p: NoisePredictor,
    sched: NoiseSchedule,
    x_T,
    T: float,
    eps: float,
    cfg: AdaptiveConfig = AdaptiveConfig(),
) -> SolveResult:
    """Adaptive lambda-step solve with an embedded lower/higher-order pair.

    Each iteration proposes a step of size ``h`` in lambda, compares the two
    proposals under a mixed absolute/relative tolerance and accepts the
    higher-order one when the scaled error is at most 1. The next ``h`` is
    ``theta * h * E^(-1/q)``, capped so the solve never overshoots eps.
    """
    pair = cfg.pair
    x = np.asarray(x_T, dtype=np.float64).copy()
    x_prev = x.copy()
    s = float(T)
    h = cfg.h_init
    lam_eps = float(sched.half_log_snr(eps))
    start = p.nfe
    accepted = rejected = 0
    trace = []
    h_max = 0.0
    iterations = 0
    while s > eps and abs(s - eps) > cfg.end_tol:
        if iterations == cfg.max_iter:
            raise ConvergenceError(f"adaptive solve did not reach eps within {cfg.max_iter} iterations")
        iterations += 1
        lam_s = float(sched.half_log_snr(s))
        h = min(h, lam_eps - lam_s)
        lam_t = lam_s + h
        t = eps if lam_t >= lam_eps else float(sched.time_of_lambda(lam_t))
        eps_s = p(x, s)
        if pair is AdaptivePair.ORDER12:
            x_lo = dpm1_step(p, sched, x, s, t, eps_s=eps_s)
            x_hi = dpm2_step(p, sched, x, s, t, r1=0.5, eps_s=eps_s)
        else:
            x_hi, x_lo = _dpm3_with_lower(p, sched, x, s, t, 1 / 3, 2 / 3, eps_s)
        err = _scaled_error(x_lo, x_hi, x_prev, cfg)
        ok = err <= 1.0
        trace.append(StepRecord(t, lam_t, h, accepted=ok, error=err))
        if ok:
            x_prev, x, s = x_lo, x_hi, t
            accepted += 1
            h_max = max(h_max, h)
        else:
            rejected += 1
        lam_s = float(sched.half_log_snr(s))
        grow = math.inf if err == 0 else err ** (-1.0 / pair.order)
        h = min(cfg.theta * h * grow, lam_eps - lam_s)
    return SolveResult(
        final_state=x,
        nfe=p.nfe - start,
        accepted_steps=accepted,
        rejected_steps=rejected,
        trace=trace,
        h_max=h_max,
    )
