"""Adaptive step size with the embedded 1/2 and 2/3 pairs.

On a Gaussian toy the exact flow is available in closed form, so the final
error can be read off directly.
"""
import numpy as np

from dpmkit import (
    AdaptiveConfig,
    GaussianProblem,
    NoiseSchedule,
    gaussian_flow_exact,
    make_gaussian_predictor,
    rms_error,
    solve_adaptive,
)

sched = NoiseSchedule.linear()
prob = GaussianProblem(np.array([0.5, -0.3, 0.8, 0.1]), 0.5)
p = make_gaussian_predictor(sched, prob)
x_T = np.random.default_rng(1).standard_normal(4)

for pair, eps in (("12", 1e-3), ("23", 1e-4)):
    res = solve_adaptive(p.fresh(), sched, x_T, 1.0, eps, AdaptiveConfig(pair=pair))
    err = rms_error(res.final_state, gaussian_flow_exact(sched, prob, x_T, 1.0, eps))
    print(f"pair {pair}: NFE {res.nfe}, accepted {res.accepted_steps}, rejected {res.rejected_steps}, error {err:.2e}")
    # the step size grows as the trajectory gets easier
    print("  h per accepted step:", [round(r.h, 3) for r in res.trace if r.accepted])

# tighter tolerances buy accuracy with more evaluations
for rtol in (0.05, 0.01, 0.002):
    res = solve_adaptive(p.fresh(), sched, x_T, 1.0, 1e-4, AdaptiveConfig(rtol=rtol, atol=rtol / 6, pair="23"))
    err = rms_error(res.final_state, gaussian_flow_exact(sched, prob, x_T, 1.0, 1e-4))
    print(f"rtol {rtol}: NFE {res.nfe}, error {err:.2e}")
