"""Reference integrators: DDIM and explicit Runge-Kutta in t or lambda."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .predictor import NoisePredictor
from .schedule import NoiseSchedule, lambda_to_alpha_sigma
from .solver import SolveResult, StepRecord, TimeGrid, uniform_lambda_grid


class MethodKind(str, Enum):
    DDIM = "ddim"
    RK2_T = "rk2_t"
    RK3_T = "rk3_t"
    RK2_LAMBDA = "rk2_lambda"
    RK3_LAMBDA = "rk3_lambda"


class GridStyle(str, Enum):
    UNIFORM_T = "uniform_t"
    UNIFORM_LAMBDA = "uniform_lambda"
    QUADRATIC_T = "quadratic_t"


_DEFAULT_GRID = {
    MethodKind.DDIM: GridStyle.UNIFORM_LAMBDA,
    MethodKind.RK2_T: GridStyle.UNIFORM_T,
    MethodKind.RK3_T: GridStyle.UNIFORM_T,
    MethodKind.RK2_LAMBDA: GridStyle.UNIFORM_LAMBDA,
    MethodKind.RK3_LAMBDA: GridStyle.UNIFORM_LAMBDA,
}


@dataclass(frozen=True)
class BaselineMethod:
    kind: MethodKind
    grid_style: GridStyle | None = None

    def __post_init__(self):
        kind = MethodKind(self.kind)
        object.__setattr__(self, "kind", kind)
        style = _DEFAULT_GRID[kind] if self.grid_style is None else GridStyle(self.grid_style)
        if kind in (MethodKind.RK2_T, MethodKind.RK3_T) and style is not GridStyle.UNIFORM_T:
            raise ValueError("t-domain RK methods step on a uniform-t grid")
        if kind in (MethodKind.RK2_LAMBDA, MethodKind.RK3_LAMBDA) and style is not GridStyle.UNIFORM_LAMBDA:
            raise ValueError("lambda-domain RK methods step on a uniform-lambda grid")
        object.__setattr__(self, "grid_style", style)

    @property
    def cost(self) -> int:
        """Predictor evaluations per step."""
        return {MethodKind.DDIM: 1}.get(self.kind, 2 if self.kind.value.startswith("rk2") else 3)

    @property
    def in_lambda(self) -> bool:
        return self.kind in (MethodKind.RK2_LAMBDA, MethodKind.RK3_LAMBDA)


def ddim_step(p: NoisePredictor, sched: NoiseSchedule, x, s, t):
    """One DDIM step from s to t; 1 NFE (none when s == t)."""
    x = np.asarray(x, dtype=np.float64)
    if s == t:
        return x.copy()
    a_s, sig_s = sched.alpha_sigma(s)
    a_t, sig_t = sched.alpha_sigma(t)
    return (a_t / a_s) * x - a_t * (sig_s / a_s - sig_t / a_t) * p(x, s)


def ode_field_t(p: NoisePredictor, sched: NoiseSchedule, x, t):
    """dx/dt = f(t) x + g^2(t) / (2 sigma_t) * eps(x, t)."""
    f, g2 = sched.drift_diffusion(t)
    _, sigma = sched.alpha_sigma(t)
    return f * x + g2 / (2 * sigma) * p(x, t)


def ode_field_lambda(p: NoisePredictor, sched: NoiseSchedule, x, lam):
    """dx/dlambda = sigma^2 x - sigma eps(x, t(lambda)) for VP schedules."""
    _, sigma = lambda_to_alpha_sigma(lam)
    t = sched.time_of_lambda(lam)
    return sigma**2 * x - sigma * p(x, t)


def explicit_rk(field, x, a, b, order):
    """One step of explicit midpoint (order 2) or Heun's third-order method for dy/dtau = field(y, tau)."""
    if order not in (2, 3):
        raise ValueError("explicit_rk supports orders 2 and 3")
    h = b - a
    if order == 2:
        # explicit midpoint
        u = x + 0.5 * h * field(x, a)
        return x + h * field(u, a + 0.5 * h)
    # Heun's third-order method
    k0 = field(x, a)
    u1 = x + h / 3 * k0
    u2 = x + 2 * h / 3 * field(u1, a + h / 3)
    return x + h / 4 * k0 + 3 * h / 4 * field(u2, a + 2 * h / 3)


def rk_step(method: BaselineMethod, p: NoisePredictor, sched: NoiseSchedule, x, start, end):
    """One explicit RK step between two coordinates (times, or lambdas for the lambda variants)."""
    if not isinstance(method, BaselineMethod):
        method = BaselineMethod(method)
    if method.kind is MethodKind.DDIM:
        raise ValueError("rk_step needs an RK method; use ddim_step for DDIM")
    x = np.asarray(x, dtype=np.float64)
    order = 2 if method.kind in (MethodKind.RK2_T, MethodKind.RK2_LAMBDA) else 3
    if method.in_lambda:
        field = lambda y, lam: ode_field_lambda(p, sched, y, lam)  # noqa: E731
    else:
        field = lambda y, t: ode_field_t(p, sched, y, t)  # noqa: E731
    return explicit_rk(field, x, start, end, order)


def uniform_t_grid(sched: NoiseSchedule, T: float, eps: float, M: int) -> TimeGrid:
    times = np.linspace(T, eps, M + 1)
    times[0], times[-1] = T, eps
    return TimeGrid(times, sched.half_log_snr(times))


def quadratic_t_grid(sched: NoiseSchedule, T: float, eps: float, M: int) -> TimeGrid:
    """Times ``eps + (i/M)^2 (T - eps)`` for i = M..0, dense near eps.

    The offset by eps keeps the last point at the end time; this
    parameterisation is this package's convention.
    """
    i = np.arange(M, -1, -1)
    times = eps + (i / M) ** 2 * (T - eps)
    times[0], times[-1] = T, eps
    return TimeGrid(times, sched.half_log_snr(times))


def make_grid(style: GridStyle, sched, T, eps, M) -> TimeGrid:
    style = GridStyle(style)
    if style is GridStyle.UNIFORM_T:
        return uniform_t_grid(sched, T, eps, M)
    if style is GridStyle.QUADRATIC_T:
        return quadratic_t_grid(sched, T, eps, M)
    return uniform_lambda_grid(sched, T, eps, M)


def solve_baseline(
    method: BaselineMethod, p: NoisePredictor, sched: NoiseSchedule, x_T, T, eps, M: int
) -> SolveResult:
    """Run M steps of a baseline method on its grid."""
    if not isinstance(method, BaselineMethod):
        method = BaselineMethod(method)
    grid = make_grid(method.grid_style, sched, T, eps, M)
    x = np.asarray(x_T, dtype=np.float64).copy()
    start = p.nfe
    trace = []
    for i in range(M):
        s, t = grid.times[i], grid.times[i + 1]
        if method.kind is MethodKind.DDIM:
            x = ddim_step(p, sched, x, s, t)
        elif method.in_lambda:
            x = rk_step(method, p, sched, x, grid.lambdas[i], grid.lambdas[i + 1])
        else:
            x = rk_step(method, p, sched, x, s, t)
        trace.append(StepRecord(float(t), float(grid.lambdas[i + 1]), float(grid.steps[i])))
    return SolveResult(x, p.nfe - start, M, trace=trace, h_max=grid.h_max)
