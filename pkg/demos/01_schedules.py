"""Noise schedules and the half-log-SNR.

Run with: python demos/01_schedules.py
"""
import numpy as np

from dpmkit import NoiseSchedule

lin = NoiseSchedule.linear()
cos = NoiseSchedule.cosine()

# alpha^2 + sigma^2 = 1 for both schedules
t = np.linspace(0.01, 0.99, 5)
for sched in (lin, cos):
    alpha, sigma = sched.alpha_sigma(t)
    print(sched.kind.value, "alpha:", np.round(alpha, 4))
    print(sched.kind.value, "sigma:", np.round(sigma, 4))

# lambda falls monotonically from the clean end to the noisy end
print("linear lambda range:", lin.lambda_range)
print("cosine lambda range:", cos.lambda_range)

# time_of_lambda undoes half_log_snr
lam = lin.half_log_snr(t)
print("roundtrip error:", np.max(np.abs(lin.time_of_lambda(lam) - t)))

# drift and diffusion of the forward SDE; g^2 = -2 f for VP schedules
f, g2 = lin.drift_diffusion(t)
print("f:", np.round(f, 3))
print("g^2:", np.round(g2, 3))
