"""Exponential-integrator samplers for diffusion ODEs, with analytic test problems."""

from .baseline import (
    BaselineMethod,
    GridStyle,
    MethodKind,
    ddim_step,
    explicit_rk,
    ode_field_lambda,
    ode_field_t,
    quadratic_t_grid,
    rk_step,
    solve_baseline,
    uniform_t_grid,
)
from .oracle import ErrorReport, estimate_order, gaussian_flow_exact, reference_solve, rms_error
from .predictor import (
    DiscreteMode,
    DiscreteModelSpec,
    GaussianProblem,
    MixtureProblem,
    NoisePredictor,
    constant_predictor,
    eval_counted,
    gaussian_discrete_model,
    make_gaussian_predictor,
    make_mixture_predictor,
    mixture_predictor,
    predictor_for,
    wrap_discrete,
    wrap_guidance,
    zero_predictor,
)
from .schedule import NoiseSchedule, ScheduleDomainError, ScheduleKind, make_schedule
from .solver import (
    AdaptiveConfig,
    AdaptivePair,
    ConvergenceError,
    SolveResult,
    StepPlan,
    TimeGrid,
    budget_plan,
    dpm1_step,
    dpm2_step,
    dpm3_step,
    lambda_grid,
    phi,
    solve_adaptive,
    solve_fixed,
    uniform_lambda_grid,
)

__version__ = "0.1.0"
