import math

import numpy as np
import pytest

from dpmkit import (
    BaselineMethod,
    GaussianProblem,
    ddim_step,
    dpm1_step,
    estimate_order,
    gaussian_flow_exact,
    make_gaussian_predictor,
    mixture_predictor,
    ode_field_lambda,
    ode_field_t,
    quadratic_t_grid,
    reference_solve,
    rk_step,
    rms_error,
    solve_baseline,
    uniform_t_grid,
    zero_predictor,
)
from dpmkit.baseline import explicit_rk


def test_ddim_same_time_is_identity(lin, gauss):
    p = make_gaussian_predictor(lin, gauss)
    x = np.arange(4.0)
    assert np.array_equal(ddim_step(p, lin, x, 0.4, 0.4), x)
    assert p.nfe == 0


def test_ddim_zero_predictor(cos, rng):
    x = rng.standard_normal(4)
    ratio = math.exp(cos.log_alpha(0.2) - cos.log_alpha(0.7))
    np.testing.assert_allclose(ddim_step(zero_predictor(), cos, x, 0.7, 0.2), ratio * x, rtol=1e-15)


def test_ddim_matches_dpm1(lin, mixture, rng):
    p = mixture_predictor(lin, mixture)
    for _ in range(50):
        s, t = sorted(rng.uniform(1e-3, 1.0, 2))[::-1]
        x = rng.standard_normal(4)
        a, b = ddim_step(p, lin, x, s, t), dpm1_step(p, lin, x, s, t)
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_fields_with_zero_predictor(lin, rng):
    x = rng.standard_normal(3)
    f, _ = lin.drift_diffusion(0.3)
    np.testing.assert_allclose(ode_field_t(zero_predictor(), lin, x, 0.3), f * x)
    lam = 1.2
    sigma2 = 1 / (1 + math.exp(2 * lam))
    np.testing.assert_allclose(ode_field_lambda(zero_predictor(), lin, x, lam), sigma2 * x, rtol=1e-14)


@pytest.mark.parametrize("name", ["lin", "cos"])
def test_stationary_fields_vanish(name, request, rng):
    sched = request.getfixturevalue(name)
    p = make_gaussian_predictor(sched, GaussianProblem.isotropic(4))
    x = rng.standard_normal((5, 4))
    for t in (0.01, 0.5, 0.9):
        assert np.max(np.abs(ode_field_t(p, sched, x, t))) < 1e-12 * max(1.0, abs(sched.drift_diffusion(t)[0]))
        lam = sched.half_log_snr(t)
        assert np.max(np.abs(ode_field_lambda(p, sched, x, lam))) < 1e-12


def test_chain_rule_between_fields(cos, mixture, rng):
    p = mixture_predictor(cos, mixture)
    x = rng.standard_normal((3, 4))
    for t in (0.05, 0.4, 0.8):
        lam = cos.half_log_snr(t)
        lhs = ode_field_lambda(p, cos, x, lam) * cos.dlambda_dt(t)
        np.testing.assert_allclose(lhs, ode_field_t(p, cos, x, t), rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("t", [0.05, 0.3, 0.8])
def test_t_field_is_derivative_of_exact_flow(lin, gauss, rng, t):
    p = make_gaussian_predictor(lin, gauss)
    x = rng.standard_normal(4)
    dt = 1e-6
    fd = (gaussian_flow_exact(lin, gauss, x, t, t + dt) - gaussian_flow_exact(lin, gauss, x, t, t - dt)) / (2 * dt)
    np.testing.assert_allclose(ode_field_t(p, lin, x, t), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("order,expected", [(2, lambda h: 1 + h + h**2 / 2), (3, lambda h: 1 + h + h**2 / 2 + h**3 / 6)])
def test_rk_on_linear_field(order, expected):
    for h in (0.1, 0.5, -0.3):
        out = explicit_rk(lambda y, tau: y, np.array([2.0]), 0.0, h, order)
        assert out[0] == pytest.approx(2.0 * expected(h), rel=1e-15)


def test_rk_step_zero_field_is_identity(lin):
    p = make_gaussian_predictor(lin, GaussianProblem.isotropic(2))
    x = np.array([0.3, -1.2])
    for kind in ("rk2_t", "rk3_t"):
        np.testing.assert_allclose(rk_step(kind, p, lin, x, 0.9, 0.2), x, atol=1e-12)
    for kind in ("rk2_lambda", "rk3_lambda"):
        np.testing.assert_allclose(rk_step(kind, p, lin, x, -3.0, 2.0), x, atol=1e-12)


def test_rk_step_rejects_ddim(lin):
    with pytest.raises(ValueError):
        rk_step("ddim", zero_predictor(), lin, np.zeros(2), 0.5, 0.2)


def test_method_pairing():
    assert BaselineMethod("rk2_t").grid_style.value == "uniform_t"
    assert BaselineMethod("rk3_lambda").grid_style.value == "uniform_lambda"
    assert BaselineMethod("ddim", "quadratic_t").cost == 1
    with pytest.raises(ValueError):
        BaselineMethod("rk2_t", "uniform_lambda")
    with pytest.raises(ValueError):
        BaselineMethod("rk3_lambda", "quadratic_t")


def test_grids(lin):
    u = uniform_t_grid(lin, 1.0, 1e-3, 4)
    np.testing.assert_allclose(np.diff(u.times), -(1.0 - 1e-3) / 4)
    q = quadratic_t_grid(lin, 1.0, 1e-3, 4)
    assert q.times[0] == 1.0 and q.times[-1] == 1e-3
    np.testing.assert_allclose(q.times, 1e-3 + (np.arange(4, -1, -1) / 4) ** 2 * (1.0 - 1e-3))


@pytest.mark.parametrize("kind,cost", [("ddim", 1), ("rk2_t", 2), ("rk3_t", 3), ("rk2_lambda", 2), ("rk3_lambda", 3)])
def test_solve_baseline_nfe(lin, mixture, kind, cost):
    p = mixture_predictor(lin, mixture)
    res = solve_baseline(kind, p, lin, np.ones((2, 4)), 1.0, 1e-3, 7)
    assert res.nfe == p.nfe == 7 * cost
    assert res.accepted_steps == 7


def test_ddim_quadratic_grid_converges(lin, gauss, rng):
    x = rng.standard_normal((4, 4))
    truth = gaussian_flow_exact(lin, gauss, x, 1.0, 1e-3)
    p = make_gaussian_predictor(lin, gauss)
    method = BaselineMethod("ddim", "quadratic_t")
    errs = [rms_error(solve_baseline(method, p, lin, x, 1.0, 1e-3, M).final_state, truth) for M in (10, 40)]
    assert errs[1] < errs[0] / 2


@pytest.fixture(scope="module")
def mixture_reference(lin, mixture):
    x = np.random.default_rng(7).standard_normal((8, 4))
    return x, reference_solve(mixture_predictor(lin, mixture), lin, x, 1.0, 1e-3, 20_000)


@pytest.mark.parametrize("kind,k", [("rk2_t", 2), ("rk3_t", 3), ("rk2_lambda", 2), ("rk3_lambda", 3)])
def test_rk_order_on_mixture(lin, mixture, mixture_reference, kind, k):
    x, truth = mixture_reference
    p = mixture_predictor(lin, mixture)
    hs, errs = [], []
    for M in (20, 40, 80, 160, 320):
        res = solve_baseline(kind, p, lin, x, 1.0, 1e-3, M)
        hs.append(res.h_max if kind.endswith("lambda") else 1.0 / M)
        errs.append(rms_error(res.final_state, truth))
    assert k - 0.3 <= estimate_order(hs, errs) <= k + 0.7
