"""Error against step size for first, second and third order steps.

The data is a 3-component Gaussian mixture in 4-D, so the exact noise
predictor is known but the ODE has no closed-form solution. The reference
comes from a fine RK4 solve in lambda.
"""
import numpy as np

from dpmkit import (
    NoiseSchedule,
    StepPlan,
    estimate_order,
    make_mixture_predictor,
    reference_solve,
    rms_error,
    solve_fixed,
)

sched = NoiseSchedule.linear()
p = make_mixture_predictor(
    sched,
    weights=[0.5, 0.3, 0.2],
    means=[[1.0, 0.5, -0.5, 0.0], [-1.0, 0.0, 0.5, 1.0], [0.0, -1.0, 0.0, -0.5]],
    scales=[0.5, 0.7, 0.6],
)
x_T = np.random.default_rng(0).standard_normal((8, 4))
truth = reference_solve(p, sched, x_T, 1.0, 1e-3)

for order in (1, 2, 3):
    hs, errs = [], []
    for M in (5, 10, 20, 40, 80):
        res = solve_fixed(p, sched, x_T, 1.0, 1e-3, StepPlan.uniform(order, M))
        hs.append(res.h_max)
        errs.append(rms_error(res.final_state, truth))
        print(f"order {order}  M={M:3d}  NFE={res.nfe:3d}  h={res.h_max:.3f}  err={errs[-1]:.3e}")
    print(f"order {order}: fitted slope {estimate_order(hs, errs):.2f}\n")
