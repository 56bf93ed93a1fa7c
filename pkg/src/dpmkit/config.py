"""JSON run configuration for the experiment harness.

Every field has a default, so ``{}`` is a valid config: a 4-D Gaussian toy on
the linear schedule solved with third-order steps.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .baseline import MethodKind
from .predictor import GaussianProblem, MixtureProblem
from .schedule import NoiseSchedule, make_schedule
from .solver import AdaptiveConfig

FIXED_SOLVERS = ("dpm1", "dpm2", "dpm3", "dpm-fast") + tuple(k.value for k in MethodKind)
ADAPTIVE_SOLVERS = ("dpm12", "dpm23")
SOLVERS = FIXED_SOLVERS + ADAPTIVE_SOLVERS
PROBLEMS = ("gaussian", "mixture")

# 3-component mixture in 4-D used as the default nonlinear toy
DEFAULT_MIXTURE = {
    "weights": [0.5, 0.3, 0.2],
    "means": [[1.0, 0.5, -0.5, 0.0], [-1.0, 0.0, 0.5, 1.0], [0.0, -1.0, 0.0, -0.5]],
    "scales": [0.5, 0.7, 0.6],
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    schedule: str = "linear"
    beta0: float = 0.1
    beta1: float = 20.0
    cosine_s: float = 0.008

    problem: str = "gaussian"
    dim: int = 4
    mu0: float | list[float] = 0.5
    s0: float = 0.5
    weights: list[float] = field(default_factory=lambda: list(DEFAULT_MIXTURE["weights"]))
    means: list[list[float]] = field(default_factory=lambda: [list(m) for m in DEFAULT_MIXTURE["means"]])
    scales: list[float] = field(default_factory=lambda: list(DEFAULT_MIXTURE["scales"]))

    solver: str = "dpm3"
    r1: float | None = None
    r2: float | None = None
    # segment counts for a convergence sweep; for dpm-fast they are NFE budgets
    steps: list[int] = field(default_factory=lambda: [5, 10, 20, 40, 80])
    # when set, the sweep is over NFE instead and steps = nfe / cost per step
    nfe: list[int] | None = None
    compare_nfe: list[int] = field(default_factory=lambda: [12, 24, 48])
    budget: int = 10
    adaptive: dict[str, Any] = field(default_factory=dict)

    T: float | None = None
    eps: float | None = None
    n_samples: int = 8
    seed: int = 0
    n_fine: int = 20_000
    output: str = "dpmkit_out.csv"

    def __post_init__(self):
        self.validate()

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "rng_seed" in data:
            if "seed" in data:
                raise ConfigError("give either seed or rng_seed, not both")
            data = {**data, "seed": data["rng_seed"]}
            del data["rng_seed"]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self):
        if self.schedule not in ("linear", "cosine"):
            raise ConfigError(f"schedule must be 'linear' or 'cosine', got {self.schedule!r}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.dim < 1 or self.n_samples < 1:
            raise ConfigError("dim and n_samples must be positive")
        if any(int(m) < 1 for m in self.steps) or (self.nfe and any(int(k) < 1 for k in self.nfe)):
            raise ConfigError("steps and nfe entries must be positive")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.n_fine < 1000:
            raise ConfigError("n_fine must be at least 1000")
        sched = self.make_schedule()
        T = self.horizon(sched)
        if not 0 < T <= sched.t_max * (1 + 1e-12):
            raise ConfigError(f"T must lie in (0, {sched.t_max}]")
        if self.eps is not None and not 0 < self.eps < T:
            raise ConfigError("eps must lie in (0, T)")
        try:
            self.make_problem()
            self.adaptive_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived objects ----------------------------------------------------

    def make_schedule(self) -> NoiseSchedule:
        try:
            if self.schedule == "linear":
                return make_schedule("linear", beta0=self.beta0, beta1=self.beta1)
            return make_schedule("cosine", cosine_s=self.cosine_s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_problem(self):
        if self.problem == "gaussian":
            mu0 = np.broadcast_to(np.asarray(self.mu0, dtype=np.float64), (self.dim,)).copy()
            return GaussianProblem(mu0, self.s0)
        prob = MixtureProblem(self.weights, self.means, self.scales)
        if prob.dim != self.dim:
            raise ConfigError(f"mixture means are {prob.dim}-D but dim is {self.dim}")
        return prob

    def adaptive_config(self) -> AdaptiveConfig:
        pair = "23" if self.solver == "dpm23" else "12"
        opts = {k: v for k, v in self.adaptive.items() if k != "batch"}
        return AdaptiveConfig(pair=pair, **opts)

    def horizon(self, sched: NoiseSchedule | None = None) -> float:
        sched = sched or self.make_schedule()
        return sched.t_max if self.T is None else float(self.T)

    def end_time(self, nfe: int | None = None) -> float:
        """Configured eps, or 1e-3 for runs of at most 15 NFE and 1e-4 beyond."""
        if self.eps is not None:
            return float(self.eps)
        if self.solver in ADAPTIVE_SOLVERS and nfe is None:
            return 1e-3 if self.solver == "dpm12" else 1e-4
        return 1e-3 if nfe is not None and nfe <= 15 else 1e-4

    def initial_states(self) -> np.ndarray:
        """x_T ~ N(0, I), shape (n_samples, dim), from a counter-based generator."""
        rng = np.random.Generator(np.random.Philox(self.seed))
        return rng.standard_normal((self.n_samples, self.dim))
