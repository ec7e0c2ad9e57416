from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize
from scipy.optimize import rosen

from mbo_settle.mbo_core import ContinuousDomain, LinearRelation
from mbo_settle.optimizer import (
    BUDGET,
    CONVERGED,
    INFEASIBLE_START,
    OptimizationProblem,
    minimize,
)


def scipy_reference(f, x0, budget, rhobeg=0.5, rhoend=1e-4, constraints=()):
    """Fortran COBYLA shipped with scipy; returns the evaluated points and values."""
    xs, fs = [], []

    def wrapped(x):
        xs.append(np.array(x))
        fs.append(f(x))
        return fs[-1]

    scipy_minimize(wrapped, x0, method="COBYLA", constraints=constraints,
                   options={"rhobeg": rhobeg, "tol": rhoend, "maxiter": budget})
    return np.array(xs), np.array(fs)


def test_convex_1d():
    res = minimize(OptimizationProblem(lambda y: (y[0] - 2) ** 2, [0.0], ContinuousDomain(1, (0,), (5,)), 50))
    assert abs(res.x[0] - 2) < 1e-3
    assert res.nfev <= 50


@pytest.mark.parametrize("as_bound", [True, False])
def test_active_constraint(as_bound):
    dom = (ContinuousDomain(1, (1,), (np.inf,)) if as_bound
           else ContinuousDomain(1, relations=(LinearRelation((1.0,), 1.0),)))
    res = minimize(OptimizationProblem(lambda y: y[0], [3.0], dom, 50))
    assert abs(res.x[0] - 1) < 1e-3


def test_rosenbrock_matches_reference_best_value():
    res = minimize(OptimizationProblem(rosen, [0.0, 0.0], None, 2000))
    xs, fs = scipy_reference(rosen, [0.0, 0.0], 2000)
    assert res.nfev == len(fs)
    assert abs(res.fun - fs.min()) < 1e-6
    hist = np.array([h[0] for h in res.history])
    np.testing.assert_array_equal(hist, xs)


@pytest.mark.xfail(strict=True, reason="classic COBYLA reaches about 1.7e-2 on this budget; see the decisions ledger")
def test_rosenbrock_reaches_1e_3():
    res = minimize(OptimizationProblem(rosen, [0.0, 0.0], None, 2000))
    assert res.fun < 1e-3


def test_trajectory_matches_reference_with_linear_constraints():
    def f(x):
        return (x[0] - 2) ** 2 + (x[1] - 1) ** 2 + x[2] ** 2

    dom = ContinuousDomain(3, relations=(LinearRelation((1, 1, 1), 1.0), LinearRelation((1, -1, 0), 0.5)))
    cons = [{"type": "ineq", "fun": lambda x: x[0] + x[1] + x[2] - 1},
            {"type": "ineq", "fun": lambda x: x[0] - x[1] - 0.5}]
    res = minimize(OptimizationProblem(f, [1.0, 0.0, 0.5], dom, 500))
    xs, _ = scipy_reference(f, [1.0, 0.0, 0.5], 500, constraints=cons)
    np.testing.assert_array_equal(np.array([h[0] for h in res.history]), xs)
    assert res.status == CONVERGED


def test_equality_relation_enforced():
    dom = ContinuousDomain(2, (-2, 0), (np.inf, np.inf), (LinearRelation((1, 2), 0.0, "=="),))
    res = minimize(OptimizationProblem(lambda y: (y[0] - 1) ** 2 + (y[1] + 3) ** 2, [-1.0, 0.5], dom, 300))
    assert dom.contains(res.x, 1e-6)
    # on y0 = -2 y1 the objective is 5 y1**2 + 10 y1 + 10, minimized at y1 = -1; the bound y1 >= 0 makes it (0, 0)
    np.testing.assert_allclose(res.x, [0.0, 0.0], atol=1e-3)


@pytest.mark.parametrize("dim", [2, 3, 5])
def test_convex_quadratic_gap(dim):
    rng = np.random.default_rng(dim)
    B = rng.normal(size=(dim, dim))
    H = B @ B.T + dim * np.eye(dim)
    c = rng.normal(size=dim)
    xstar = np.linalg.solve(H, -c)
    fstar = 0.5 * xstar @ H @ xstar + c @ xstar

    def f(x):
        return 0.5 * x @ H @ x + c @ x

    res = minimize(OptimizationProblem(f, np.zeros(dim), None, 100 * dim))
    assert res.fun - fstar < 1e-4


def test_bounds_never_violated_and_history_feasible():
    lower, upper = np.array([0.0, -1.0]), np.array([1.0, 1.0])
    dom = ContinuousDomain(2, lower, upper, (LinearRelation((1, 1), 0.5),))
    seen = []

    def f(y):
        seen.append(y.copy())
        return (y[0] - 3) ** 2 + (y[1] + 4) ** 2

    res = minimize(OptimizationProblem(f, [0.5, 0.5], dom, 200))
    assert all(np.all(y >= lower) and np.all(y <= upper) for y in seen)
    assert dom.contains(res.x, 1e-6)
    feasible_values = [v for _, v, ok in res.history if ok]
    assert res.fun == min(feasible_values)


def test_best_values_monotone_and_deterministic():
    def problem():
        return OptimizationProblem(lambda y: np.sin(3 * y[0]) + (y[1] - 0.3) ** 2, [0.0, 0.0], None, 120)

    a, b = minimize(problem()), minimize(problem())
    best = a.best_values
    assert all(u >= v for u, v in zip(best, best[1:]))
    assert [h[1] for h in a.history] == [h[1] for h in b.history]
    assert a.status == BUDGET or a.status == CONVERGED


def test_infeasible_start():
    dom = ContinuousDomain(1, (0,), (1,))
    res = minimize(OptimizationProblem(lambda y: y[0], [2.0], dom, 10))
    assert res.status == INFEASIBLE_START
    assert res.nfev == 0


def test_budget_exhausted_status():
    res = minimize(OptimizationProblem(rosen, [0.0, 0.0], None, 25))
    assert res.status == BUDGET
    assert res.nfev == 25


def test_invalid_problem():
    with pytest.raises(ValueError):
        minimize(OptimizationProblem(lambda y: 0.0, [0.0], ContinuousDomain(2), 10))
    with pytest.raises(ValueError):
        minimize(OptimizationProblem(lambda y: 0.0, [0.0], None, 0))
