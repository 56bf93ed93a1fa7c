"""Noise-prediction models with NFE accounting.

Predictors map a state ``x`` of shape ``(..., D)`` and a scalar time ``t`` to
a noise estimate of the same shape. A batched call counts as one function
evaluation, which is how sampler cost is usually reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule, ScheduleDomainError

EvalFn = Callable[[np.ndarray, float], np.ndarray]


class MixtureError(ValueError):
    pass


@dataclass
class NoisePredictor:
    """A deterministic ``eps(x, t)`` plus a per-solve evaluation counter.

    The counter is the only mutable state. To share one model between
    concurrent solves, give each solve its own :meth:`fresh` copy.
    """

    eval_fn: EvalFn
    name: str = "predictor"
    nfe: int = field(default=0, compare=False)

    def __call__(self, x, t):
        out = self.eval_fn(np.asarray(x, dtype=np.float64), float(t))
        self.nfe += 1
        return out

    def fresh(self) -> "NoisePredictor":
        """Same model, zeroed counter."""
        return NoisePredictor(self.eval_fn, self.name)

    def reset(self):
        self.nfe = 0


def eval_counted(p: NoisePredictor, x, t):
    return p(x, t)


def zero_predictor() -> NoisePredictor:
    return NoisePredictor(lambda x, t: np.zeros_like(x), "zero")


def constant_predictor(c) -> NoisePredictor:
    c = np.asarray(c, dtype=np.float64)
    return NoisePredictor(lambda x, t: np.broadcast_to(c, x.shape).copy(), "constant")


@dataclass(frozen=True)
class GaussianProblem:
    """Data distribution N(mu0, s0^2 I) in ``dim`` dimensions."""

    mu0: np.ndarray
    s0: float = 1.0

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        if mu0.ndim != 1:
            raise ValueError("mu0 must be a vector")
        if not self.s0 > 0:
            raise ValueError("s0 must be positive")
        object.__setattr__(self, "mu0", mu0)

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    @classmethod
    def isotropic(cls, dim: int, mean: float = 0.0, s0: float = 1.0) -> "GaussianProblem":
        return cls(np.full(dim, mean), s0)

    def marginal_var(self, alpha, sigma):
        return alpha**2 * self.s0**2 + sigma**2


@dataclass(frozen=True)
class MixtureProblem:
    """Isotropic Gaussian mixture sum_j w_j N(mu_j, s_j^2 I)."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        sc = np.asarray(self.scales, dtype=np.float64).ravel()
        if not (len(w) == mu.shape[0] == len(sc)):
            raise MixtureError("weights, means and scales disagree on component count")
        if np.any(w <= 0):
            raise MixtureError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise MixtureError(f"mixture weights sum to {w.sum()!r}, not 1")
        if np.any(sc <= 0):
            raise MixtureError("component scales must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "scales", sc)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def make_gaussian_predictor(sched: NoiseSchedule, prob: GaussianProblem) -> NoisePredictor:
    """Exact noise predictor ``-sigma_t * grad log q_t`` for Gaussian data."""
    mu0, s0 = prob.mu0, prob.s0

    def eps(x, t):
        alpha, sigma = sched.alpha_sigma(t)
        return sigma * (x - alpha * mu0) / (alpha**2 * s0**2 + sigma**2)

    return NoisePredictor(eps, "gaussian")


def mixture_log_density(sched: NoiseSchedule, prob: MixtureProblem, x, t):
    """log q_t(x) for the diffused mixture; used by tests as an independent check."""
    alpha, sigma = sched.alpha_sigma(t)
    x = np.asarray(x, dtype=np.float64)
    v = alpha**2 * prob.scales**2 + sigma**2
    diff = x[..., None, :] - alpha * prob.means
    sq = np.sum(diff**2, axis=-1)
    logp = np.log(prob.weights) - 0.5 * prob.dim * np.log(2 * np.pi * v) - 0.5 * sq / v
    return logsumexp(logp, axis=-1)


def make_mixture_predictor(sched: NoiseSchedule, weights: Sequence[float], means, scales) -> NoisePredictor:
    """Exact noise predictor for an isotropic Gaussian-mixture data distribution.

    Component responsibilities are computed in log space, so the predictor is
    stable even where one component dominates by many orders of magnitude.
    """
    return mixture_predictor(sched, MixtureProblem(weights, means, scales))


def mixture_predictor(sched: NoiseSchedule, prob: MixtureProblem) -> NoisePredictor:
    log_w = np.log(prob.weights)
    mus, scales2 = prob.means, prob.scales**2
    dim = prob.dim

    def eps(x, t):
        alpha, sigma = sched.alpha_sigma(t)
        v = alpha * alpha * scales2 + sigma * sigma
        diff = x[..., None, :] - alpha * mus
        logp = log_w - 0.5 * dim * np.log(v) - 0.5 * np.einsum("...jd,...jd->...j", diff, diff) / v
        r = np.exp(logp - logp.max(axis=-1, keepdims=True))
        r *= sigma / (v * r.sum(axis=-1, keepdims=True))
        return np.einsum("...j,...jd->...d", r, diff)

    return NoisePredictor(eps, "mixture")


# -- discrete-time models ----------------------------------------------------


class DiscreteMode(str, Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"


@dataclass(frozen=True)
class DiscreteModelSpec:
    """A model trained on ``n_steps`` discrete indices in [0, 1000(N-1)/N].

    ``inner`` is called as ``inner(x, index)`` with a possibly fractional index.
    """

    inner: EvalFn
    n_steps: int = 1000
    horizon: float = 1.0
    mode: DiscreteMode = DiscreteMode.TYPE1

    def __post_init__(self):
        object.__setattr__(self, "mode", DiscreteMode(self.mode))
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")

    def index(self, t: float) -> float:
        """Map continuous time in [0, horizon] to the discrete model input."""
        n, big_t = self.n_steps, self.horizon
        if t > big_t * (1 + 1e-12) or t < 0:
            raise ScheduleDomainError(f"time {t} outside [0, {big_t}]")
        t = min(t, big_t)
        if self.mode is DiscreteMode.TYPE1:
            # divided by the horizon so t = T lands on 1000(N-1)/N for any T
            return 1000.0 * max(t - big_t / n, 0.0) / big_t
        return 1000.0 * (n - 1) * t / (n * big_t)


def wrap_discrete(spec: DiscreteModelSpec) -> NoisePredictor:
    def eps(x, t):
        return spec.inner(x, spec.index(t))

    return NoisePredictor(eps, f"discrete-{spec.mode.value}")


def gaussian_discrete_model(sched: NoiseSchedule, prob: GaussianProblem, horizon: float = 1.0) -> EvalFn:
    """Toy discrete-time model: the Gaussian predictor at ``t' = index / 1000 * horizon``.

    Index 0 maps to t' = 0 where sigma = 0 and the prediction is exactly zero.
    """
    mu0, s0 = prob.mu0, prob.s0

    def inner(x, index):
        la = sched.log_alpha(index / 1000.0 * horizon)
        alpha, sigma = np.exp(la), np.sqrt(-np.expm1(2.0 * la))
        return sigma * (x - alpha * mu0) / (alpha**2 * s0**2 + sigma**2)

    return inner


def predictor_for(sched: NoiseSchedule, prob) -> NoisePredictor:
    if isinstance(prob, GaussianProblem):
        return make_gaussian_predictor(sched, prob)
    if isinstance(prob, MixtureProblem):
        return mixture_predictor(sched, prob)
    raise TypeError(f"no analytic predictor for {type(prob).__name__}")


def wrap_guidance(
    p: NoisePredictor,
    grad_log_classifier: Callable[[np.ndarray, float], np.ndarray],
    scale: float,
    sched: NoiseSchedule,
) -> NoisePredictor:
    """Classifier-guided predictor ``eps(x,t) - scale * sigma_t * grad log p_t(y|x)``.

    Only the noise-model call is charged as an NFE. The classifier gradient is
    free in this accounting, although in real guided sampling it roughly
    doubles the cost of each step.
    """
    if scale < 0:
        raise ValueError("guidance scale must be non-negative")
    base = p.eval_fn

    def eps(x, t):
        out = base(x, t)
        if scale == 0:
            return out
        _, sigma = sched.alpha_sigma(t)
        return out - scale * sigma * np.asarray(grad_log_classifier(x, t))

    return NoisePredictor(eps, f"guided-{p.name}")
