"""DDIM and Runge-Kutta baselines next to the exponential-integrator steps.

Each method gets the same evaluation budget; the table is printed as errors
against a fine reference.
"""
import numpy as np

from dpmkit import (
    NoiseSchedule,
    StepPlan,
    make_mixture_predictor,
    reference_solve,
    rms_error,
    solve_baseline,
    solve_fixed,
)

sched = NoiseSchedule.linear()
p = make_mixture_predictor(
    sched,
    [0.5, 0.3, 0.2],
    [[1.0, 0.5, -0.5, 0.0], [-1.0, 0.0, 0.5, 1.0], [0.0, -1.0, 0.0, -0.5]],
    [0.5, 0.7, 0.6],
)
x_T = np.random.default_rng(2).standard_normal((8, 4))
truth = reference_solve(p, sched, x_T, 1.0, 1e-4)

print(f"{'method':>11} " + " ".join(f"NFE={k:<6d}" for k in (12, 24, 48)))
for method, cost in [("ddim", 1), ("rk2_t", 2), ("rk2_lambda", 2), ("rk3_t", 3), ("rk3_lambda", 3)]:
    errs = [solve_baseline(method, p, sched, x_T, 1.0, 1e-4, k // cost).final_state for k in (12, 24, 48)]
    print(f"{method:>11} " + " ".join(f"{rms_error(e, truth):.2e}  " for e in errs))
for order in (2, 3):
    errs = [solve_fixed(p, sched, x_T, 1.0, 1e-4, StepPlan.uniform(order, k // order)).final_state for k in (12, 24, 48)]
    print(f"{'dpm' + str(order):>11} " + " ".join(f"{rms_error(e, truth):.2e}  " for e in errs))
