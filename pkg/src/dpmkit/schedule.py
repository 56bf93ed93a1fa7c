"""Variance-preserving noise schedules with analytic forward and inverse maps.

A schedule is fully described by ``log alpha(t)``; since alpha^2 + sigma^2 = 1,
sigma and the half-log-SNR ``lambda = log(alpha / sigma)`` follow from it.
Both supported schedules also admit a closed-form inverse ``t(lambda)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# smallest time at which time_of_lambda is guaranteed to invert
EPS_MIN = 1e-6
SIGMA_FLOOR = 1e-30
# slack on domain checks so roundtripped endpoints are not rejected
_T_SLACK = 1e-12
_LAM_SLACK = 1e-9

COSINE_T_MAX = 0.9946


class ScheduleKind(str, Enum):
    LINEAR = "linear"
    COSINE = "cosine"


class ScheduleDomainError(ValueError):
    """Raised when a time or lambda lies outside the schedule's usable range."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-VP or cosine-VP noise schedule.

    Every method accepts a scalar or an array of times and returns values of
    the same shape. Instances are immutable and safe to share across threads.
    """

    kind: ScheduleKind = ScheduleKind.LINEAR
    beta0: float = 0.1
    beta1: float = 20.0
    cosine_s: float = 0.008
    t_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.t_max is None:
            default = 1.0 if self.kind is ScheduleKind.LINEAR else COSINE_T_MAX
            object.__setattr__(self, "t_max", default)
        if self.kind is ScheduleKind.LINEAR:
            if not (self.beta0 > 0 and self.beta1 > self.beta0):
                raise ValueError("linear schedule needs 0 < beta0 < beta1")
        elif self.cosine_s <= 0:
            raise ValueError("cosine offset must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    @classmethod
    def linear(cls, beta0: float = 0.1, beta1: float = 20.0) -> "NoiseSchedule":
        return cls(ScheduleKind.LINEAR, beta0=beta0, beta1=beta1)

    @classmethod
    def cosine(cls, s: float = 0.008) -> "NoiseSchedule":
        return cls(ScheduleKind.COSINE, cosine_s=s)

    # -- forward maps -----------------------------------------------------

    def _check_t(self, t):
        if isinstance(t, float) or np.ndim(t) == 0:
            t = float(t)
            if not 0 < t <= self.t_max * (1 + _T_SLACK):
                raise ScheduleDomainError(f"time {t} outside (0, {self.t_max}]")
            return t
        t = np.asarray(t, dtype=np.float64)
        if np.any(t <= 0) or np.any(t > self.t_max * (1 + _T_SLACK)):
            raise ScheduleDomainError(f"times outside (0, {self.t_max}]")
        return t

    def log_alpha(self, t):
        """log alpha_t, defined on the closed interval [0, t_max]."""
        if isinstance(t, float) or np.ndim(t) == 0:
            t = float(t)
            if not 0 <= t <= self.t_max * (1 + _T_SLACK):
                raise ScheduleDomainError(f"time {t} outside [0, {self.t_max}]")
            if self.kind is ScheduleKind.LINEAR:
                return -0.25 * (self.beta1 - self.beta0) * t * t - 0.5 * self.beta0 * t
            s = self.cosine_s
            return math.log(math.cos(0.5 * math.pi * (t + s) / (1 + s))) - self._log_cos_offset
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.t_max * (1 + _T_SLACK)):
            raise ScheduleDomainError(f"times outside [0, {self.t_max}]")
        if self.kind is ScheduleKind.LINEAR:
            return -0.25 * (self.beta1 - self.beta0) * t**2 - 0.5 * self.beta0 * t
        s = self.cosine_s
        return np.log(np.cos(0.5 * np.pi * (t + s) / (1 + s))) - self._log_cos_offset

    @functools.cached_property
    def _log_cos_offset(self) -> float:
        s = self.cosine_s
        return math.log(math.cos(0.5 * math.pi * s / (1 + s)))

    def alpha_sigma(self, t):
        """Return ``(alpha_t, sigma_t)``; sigma is floored at 1e-30."""
        la = self.log_alpha(self._check_t(t))
        if isinstance(la, float):
            return math.exp(la), max(math.sqrt(-math.expm1(2.0 * la)), SIGMA_FLOOR)
        alpha = np.exp(la)
        sigma = np.maximum(np.sqrt(-np.expm1(2.0 * la)), SIGMA_FLOOR)
        return alpha, sigma

    def marginal_std(self, t):
        return self.alpha_sigma(t)[1]

    def half_log_snr(self, t):
        """lambda_t = log alpha_t - log sigma_t, strictly decreasing in t."""
        la = self.log_alpha(self._check_t(t))
        if isinstance(la, float):
            return la - 0.5 * math.log(max(-math.expm1(2.0 * la), SIGMA_FLOOR**2))
        return la - 0.5 * np.log(np.maximum(-np.expm1(2.0 * la), SIGMA_FLOOR**2))

    @functools.cached_property
    def lambda_range(self) -> tuple[float, float]:
        """Invertible lambda interval ``(lambda(t_max), lambda(EPS_MIN))``."""
        return float(self.half_log_snr(self.t_max)), float(self.half_log_snr(EPS_MIN))

    def time_of_lambda(self, lam):
        """Analytic inverse of :meth:`half_log_snr`.

        ``lam`` must lie in ``[lambda(t_max), lambda(EPS_MIN)]``.
        """
        lam = np.asarray(lam, dtype=np.float64)
        lo, hi = self.lambda_range
        if np.any(lam < lo - _LAM_SLACK * max(1.0, abs(lo))) or np.any(
            lam > hi + _LAM_SLACK * max(1.0, abs(hi))
        ):
            raise ScheduleDomainError(f"lambda outside invertible range [{lo}, {hi}]")
        # log(e^{-2 lam} + 1), evaluated without overflow
        log_term = np.logaddexp(-2.0 * lam, 0.0)
        if self.kind is ScheduleKind.LINEAR:
            b0, b1 = self.beta0, self.beta1
            t = 2.0 * log_term / (np.sqrt(b0**2 + 2.0 * (b1 - b0) * log_term) + b0)
        else:
            s = self.cosine_s
            log_alpha = -0.5 * log_term
            arg = np.minimum(np.exp(log_alpha + self._log_cos_offset), 1.0)
            t = 2.0 * (1 + s) / np.pi * np.arccos(arg) - s
        t = np.clip(t, 0.0, self.t_max)
        return t[()] if t.ndim == 0 else t

    # -- derivatives ------------------------------------------------------

    def drift_diffusion(self, t):
        """Return ``(f(t), g^2(t))`` of the forward SDE.

        ``f = d log alpha / dt`` and ``g^2 = d sigma^2/dt - 2 f sigma^2``, which
        for a VP schedule collapses to ``-2 f``.
        """
        t = self._check_t(t)
        if self.kind is ScheduleKind.LINEAR:
            f = -0.5 * (self.beta1 - self.beta0) * t - 0.5 * self.beta0
        else:
            s = self.cosine_s
            c = 0.5 * np.pi / (1 + s)
            f = -c * np.tan(c * (t + s))
        f = f[()] if isinstance(f, np.ndarray) and f.ndim == 0 else f
        return f, -2.0 * f

    def dlambda_dt(self, t):
        f, _ = self.drift_diffusion(t)
        _, sigma = self.alpha_sigma(t)
        return f / sigma**2


def lambda_to_alpha_sigma(lam):
    """VP-only map lambda -> (alpha, sigma); independent of the schedule."""
    lam = np.asarray(lam, dtype=np.float64)
    alpha = np.exp(-0.5 * np.logaddexp(0.0, -2.0 * lam))
    sigma = np.exp(-0.5 * np.logaddexp(0.0, 2.0 * lam))
    return alpha, sigma


def make_schedule(name: str = "linear", **params) -> NoiseSchedule:
    """Build a schedule from its config name and optional parameters."""
    try:
        kind = ScheduleKind(name)
    except ValueError:
        raise ValueError(f"unknown schedule {name!r}; expected 'linear' or 'cosine'") from None
    return NoiseSchedule(kind, **params)
