"""``dpmkit`` command line: convergence sweeps, method comparisons, sampling and plans.

Exit codes: 0 on success, 2 for configuration errors, 3 for solver failures.
Set ``DPMKIT_THREADS`` to cap the worker threads used for sweep points.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baseline import solve_baseline
from .config import ADAPTIVE_SOLVERS, ConfigError, RunConfig
from .oracle import estimate_order, gaussian_flow_exact, reference_solve, rms_error
from .predictor import GaussianProblem, predictor_for
from .schedule import make_schedule
from .solver import (
    SolveResult,
    StepPlan,
    budget_plan,
    dpm2_step,
    dpm3_step,
    solve_adaptive,
    solve_fixed,
    uniform_lambda_grid,
)

CSV_HEADER = ["solver", "schedule", "problem", "nfe", "steps", "h_max", "rms_error", "seed"]
COMPARE_METHODS = ("rk2_t", "rk2_lambda", "dpm2", "rk3_t", "rk3_lambda", "dpm3", "ddim", "dpm1")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _fmt(v) -> str:
    return format(float(v), ".17g") if isinstance(v, (float, np.floating)) else str(v)


def n_threads() -> int:
    raw = os.environ.get("DPMKIT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"DPMKIT_THREADS must be an integer, got {raw!r}") from None
    return min(4, os.cpu_count() or 1)


def _parallel_map(fn, items):
    # map() yields in submission order, so output order never depends on scheduling
    with ThreadPoolExecutor(max_workers=n_threads()) as pool:
        return list(pool.map(fn, items))


def step_cost(solver: str) -> int:
    if solver in ("dpm1", "ddim"):
        return 1
    if solver in ("dpm2", "rk2_t", "rk2_lambda"):
        return 2
    if solver in ("dpm3", "rk3_t", "rk3_lambda"):
        return 3
    raise ConfigError(f"{solver} has no fixed per-step cost")


def run_fixed(cfg: RunConfig, solver: str, p, sched, x_T, T, eps, n: int):
    """Run one fixed-step solve; ``n`` is the segment count, or the NFE budget for dpm-fast."""
    if solver == "dpm-fast":
        return solve_fixed(p, sched, x_T, T, eps, budget_plan(n))
    if solver in ("dpm1", "dpm2", "dpm3"):
        order = int(solver[-1])
        if (order == 2 and cfg.r1 is not None) or (order == 3 and (cfg.r1, cfg.r2) != (None, None)):
            return _solve_custom_r(cfg, order, p, sched, x_T, T, eps, n)
        return solve_fixed(p, sched, x_T, T, eps, StepPlan.uniform(order, n))
    return solve_baseline(solver, p, sched, x_T, T, eps, n)


def _solve_custom_r(cfg, order, p, sched, x, T, eps, M):
    grid = uniform_lambda_grid(sched, T, eps, M)
    start = p.nfe
    for i in range(M):
        s, t = grid.times[i], grid.times[i + 1]
        if order == 2:
            x = dpm2_step(p, sched, x, s, t, r1=cfg.r1)
        else:
            x = dpm3_step(p, sched, x, s, t, r1=cfg.r1 or 1 / 3, r2=cfg.r2 or 2 / 3)
    return SolveResult(x, p.nfe - start, M, h_max=grid.h_max)


@dataclass
class Context:
    cfg: RunConfig
    sched: object
    prob: object
    x_T: np.ndarray
    T: float

    @classmethod
    def build(cls, cfg: RunConfig) -> "Context":
        sched = cfg.make_schedule()
        return cls(cfg, sched, cfg.make_problem(), cfg.initial_states(), cfg.horizon(sched))

    def exact(self, eps: float) -> np.ndarray:
        if isinstance(self.prob, GaussianProblem):
            return gaussian_flow_exact(self.sched, self.prob, self.x_T, self.T, eps)
        p = predictor_for(self.sched, self.prob)
        return reference_solve(p, self.sched, self.x_T, self.T, eps, self.cfg.n_fine)

    def row(self, solver, result, err) -> list:
        c = self.cfg
        return [solver, c.schedule, c.problem, result.nfe, result.accepted_steps, result.h_max, err, c.seed]


def _sweep_points(cfg: RunConfig):
    """Pairs (nfe, n) where n is what run_fixed expects."""
    if cfg.solver == "dpm-fast":
        values = cfg.nfe or cfg.steps
        return [(int(k), int(k)) for k in values]
    cost = step_cost(cfg.solver)
    if cfg.nfe:
        points = []
        for k in cfg.nfe:
            if k % cost:
                raise ConfigError(f"NFE {k} is not a multiple of {cfg.solver}'s per-step cost {cost}")
            points.append((int(k), int(k) // cost))
        return points
    return [(int(m) * cost, int(m)) for m in cfg.steps]


def cmd_convergence(cfg: RunConfig):
    """Error against the oracle for each sweep point; returns (rows, fitted order)."""
    if cfg.solver in ADAPTIVE_SOLVERS:
        raise ConfigError("convergence sweeps need a fixed-step solver")
    points = _sweep_points(cfg)
    ctx = Context.build(cfg)
    eps = cfg.end_time(max(k for k, _ in points))
    truth = ctx.exact(eps)
    base = predictor_for(ctx.sched, ctx.prob)

    def one(point):
        _, n = point
        result = run_fixed(cfg, cfg.solver, base.fresh(), ctx.sched, ctx.x_T, ctx.T, eps, n)
        return ctx.row(cfg.solver, result, rms_error(result.final_state, truth))

    rows = _parallel_map(one, points)
    try:
        order = estimate_order([r[5] for r in rows], [r[6] for r in rows])
    except ValueError:
        order = float("nan")
    return rows, order


def cmd_compare(cfg: RunConfig):
    """Every comparison method at every NFE in ``compare_nfe``, one row each."""
    for k in cfg.compare_nfe:
        if k % 6:
            raise ConfigError(f"compare NFE {k} must be divisible by 6 so every method fits exactly")
    ctx = Context.build(cfg)
    eps = cfg.end_time(max(cfg.compare_nfe))
    truth = ctx.exact(eps)
    base = predictor_for(ctx.sched, ctx.prob)
    jobs = [(m, k) for m in COMPARE_METHODS for k in cfg.compare_nfe]

    def one(job):
        method, k = job
        result = run_fixed(cfg, method, base.fresh(), ctx.sched, ctx.x_T, ctx.T, eps, k // step_cost(method))
        return ctx.row(method, result, rms_error(result.final_state, truth))

    return _parallel_map(one, jobs)


def cmd_sample(cfg: RunConfig):
    """Solve from seeded x_T; returns (final states, summary dict)."""
    ctx = Context.build(cfg)
    base = predictor_for(ctx.sched, ctx.prob)
    if cfg.solver in ADAPTIVE_SOLVERS:
        acfg = cfg.adaptive_config()
        eps = cfg.end_time()
        if cfg.adaptive.get("batch", False):
            results = [solve_adaptive(base.fresh(), ctx.sched, ctx.x_T, ctx.T, eps, acfg)]
            states = results[0].final_state
        else:
            results = _parallel_map(
                lambda x: solve_adaptive(base.fresh(), ctx.sched, x, ctx.T, eps, acfg), list(ctx.x_T)
            )
            states = np.stack([r.final_state for r in results])
    else:
        n = cfg.budget if cfg.solver == "dpm-fast" else int(cfg.steps[0])
        nfe = n if cfg.solver == "dpm-fast" else n * step_cost(cfg.solver)
        eps = cfg.end_time(nfe)
        results = [run_fixed(cfg, cfg.solver, base.fresh(), ctx.sched, ctx.x_T, ctx.T, eps, n)]
        states = results[0].final_state
    summary = {
        "nfe": sum(r.nfe for r in results),
        "accepted": sum(r.accepted_steps for r in results),
        "rejected": sum(r.rejected_steps for r in results),
        "solves": len(results),
    }
    return states, summary


def cmd_plan(K: int, schedule: str = "linear", T: float | None = None, eps: float | None = None) -> str:
    """Budget plan for K evaluations and its uniform-lambda segment boundaries."""
    if K < 1:
        raise ConfigError("NFE budget must be at least 1")
    sched = make_schedule(schedule)
    T = sched.t_max if T is None else T
    eps = (1e-3 if K <= 15 else 1e-4) if eps is None else eps
    plan = budget_plan(K)
    try:
        grid = uniform_lambda_grid(sched, T, eps, plan.n_segments)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lines = [str(plan), "segment,order,t_start,t_end,lambda_start,lambda_end"]
    for i, order in enumerate(plan.orders):
        vals = [grid.times[i], grid.times[i + 1], grid.lambdas[i], grid.lambdas[i + 1]]
        lines.append(",".join([str(i), str(order)] + [_fmt(v) for v in vals]))
    return "\n".join(lines)


# -- output -------------------------------------------------------------------


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def states_to_csv(states) -> str:
    states = np.atleast_2d(states)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(states.shape[1])])
    for row in states:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(path, text):
    Path(path).write_text(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpmkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("convergence", "error vs step size sweep for one solver"),
        ("compare", "RK, DDIM and exponential-integrator errors at shared NFE"),
        ("sample", "solve from seeded initial states and write final states"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--output", help="override the config's output path")
    p = sub.add_parser("plan", help="print the NFE-budget step plan")
    p.add_argument("--nfe", type=int, required=True)
    p.add_argument("--schedule", default="linear", choices=["linear", "cosine"])
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "plan":
            print(cmd_plan(args.nfe, args.schedule, args.T, args.eps))
            return EXIT_OK
        cfg = RunConfig.load(args.config)
        output = args.output or cfg.output
        if args.command == "convergence":
            rows, order = cmd_convergence(cfg)
            _write(output, rows_to_csv(rows))
            print(f"fitted order: {order:.4f}")
        elif args.command == "compare":
            _write(output, rows_to_csv(cmd_compare(cfg)))
        else:
            states, summary = cmd_sample(cfg)
            _write(output, states_to_csv(states))
            print(" ".join(f"{k}={v}" for k, v in summary.items()))
    except ConfigError as exc:
        print(f"dpmkit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError, OSError) as exc:
        print(f"dpmkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
