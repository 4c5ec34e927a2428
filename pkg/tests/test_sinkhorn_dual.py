import math
import warnings

import cvxpy as cp
import numpy as np
import pytest
from scipy.special import rel_entr, softmax

from robust_sinkhorn.distributions import make_rng
from robust_sinkhorn.sinkhorn_dual import (
    DroProblem,
    dual_objective,
    f_indicator,
    f_mean,
    worst_case_sample,
    worst_case_value,
    worst_case_weights,
)


def grid_primal(eps, rho_bar, lo=-3.0, hi=3.0, points=2001):
    """Brute-force primal for nominal {0}: maximize E_p[z] over grid densities
    whose entropic transport cost from the point mass stays within rho_bar."""
    z = np.linspace(lo, hi, points)
    q = np.exp(-z**2 / (2 * eps))
    q /= q.sum()
    # density ratio u = p / q keeps the tiny tail weights out of the cone
    u = cp.Variable(points, nonneg=True)
    cons = [q @ u == 1, eps * (q @ -cp.entr(u)) <= rho_bar]
    prob = cp.Problem(cp.Maximize((q * z) @ u), cons)
    with warnings.catch_warnings():
        # CLARABEL flags "optimal_inaccurate" here; the value is still within
        # 1e-4 of the closed form sqrt(2 rho_bar), which the tests check
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL)
    assert prob.status in ("optimal", "optimal_inaccurate")
    return float(prob.value), q * np.asarray(u.value)


@pytest.fixture(scope="module")
def toy():
    return DroProblem.from_function([[0.0]], f_mean, 0.1, 0.05, 200_000, make_rng(11))


class TestDualObjective:
    def test_two_draw_arithmetic(self):
        prob = DroProblem(np.array([[0.0, 1.0]]), 1.0, 0.1)
        assert dual_objective(1.0, prob) == pytest.approx(0.1 + math.log((1 + math.e) / 2), rel=1e-14)

    def test_constant_function(self):
        prob = DroProblem(np.full((3, 5), 2.5), 0.4, 0.2)
        for lam in (1e-3, 1.0, 1e3):
            assert dual_objective(lam, prob) == pytest.approx(lam * 0.2 + 2.5, rel=1e-12)
        sol = worst_case_value(prob)
        assert sol.value == 2.5

    def test_large_lambda_expansion(self):
        f = make_rng(0).standard_normal((4, 50))
        prob = DroProblem(f, 0.3, 0.01)
        lam = 1e6
        assert dual_objective(lam, prob) == pytest.approx(lam * 0.01 + f.mean(), abs=1e-5)

    def test_no_overflow(self):
        prob = DroProblem(np.array([[0.0, 1e4]]), 1e-3, 0.1)
        assert np.isfinite(dual_objective(1e-8, prob))

    def test_convex_in_lambda(self, toy):
        lam = np.logspace(-3, 3, 61)
        vals = np.array([dual_objective(v, toy) for v in lam])
        # midpoint convexity on the log grid, in lambda itself
        for i in range(1, len(lam) - 1):
            a, b = lam[i - 1], lam[i + 1]
            mid = 0.5 * (a + b)
            assert dual_objective(mid, toy) <= 0.5 * (vals[i - 1] + vals[i + 1]) + 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            DroProblem(np.zeros((1, 2)), 0.1, -0.1)
        with pytest.raises(ValueError):
            DroProblem(np.zeros((1, 2)), 0.0, 0.1)
        with pytest.raises(ValueError):
            dual_objective(0.0, DroProblem(np.zeros((1, 2)), 0.1, 0.1))


class TestWorstCaseValue:
    def test_matches_grid_primal(self, toy):
        primal, _ = grid_primal(0.1, 0.05)
        assert primal == pytest.approx(math.sqrt(2 * 0.05), abs=2e-3)
        sol = worst_case_value(toy)
        assert sol.bounded
        assert sol.value == pytest.approx(primal, abs=2e-2)

    def test_zero_radius_is_smoothed_mean(self, toy):
        prob = DroProblem(toy.f_draws, toy.epsilon, 0.0, toy.draws)
        sol = worst_case_value(prob)
        assert math.isinf(sol.lambda_star)
        sigma = toy.f_draws.std() / math.sqrt(toy.f_draws.size)
        assert abs(sol.value - 0.0) <= 3 * sigma

    def test_monotone_in_radius(self):
        f = make_rng(3).standard_normal((5, 400))
        vals = [worst_case_value(DroProblem(f, 0.2, rb)).value for rb in (0.0, 0.001, 0.01, 0.05, 0.2, 1.0)]
        assert np.all(np.diff(vals) >= -1e-10)

    def test_weak_duality(self):
        rng = make_rng(5)
        eps, rb = 0.2, 0.05
        f = rng.standard_normal((3, 60))
        sol = worst_case_value(DroProblem(f, eps, rb))
        budget = rb / eps
        for _ in range(100):
            g = rng.standard_normal(f.shape)
            # shrink a random tilt until the mean relative entropy fits the budget
            target = budget * rng.random()
            lo, hi = 0.0, 50.0
            for _ in range(80):
                th = 0.5 * (lo + hi)
                p = softmax(th * g, axis=1)
                kl = np.mean(np.sum(rel_entr(p, 1.0 / f.shape[1]), axis=1))
                lo, hi = (th, hi) if kl <= target else (lo, th)
            p = softmax(lo * g, axis=1)
            assert np.mean(np.sum(p * f, axis=1)) <= sol.value + 1e-6

    def test_negative_radius_rejected(self):
        prob = DroProblem(np.zeros((1, 2)), 0.1, 0.0)
        object.__setattr__(prob, "rho_bar", -1.0)
        with pytest.raises(ValueError):
            worst_case_value(prob)


class TestWorstCaseSample:
    def test_shifts_mean_toward_large_f(self, toy):
        sol = worst_case_value(toy)
        dist = worst_case_sample(toy, sol.lambda_star)
        assert dist.total_mass == pytest.approx(1.0)
        _, p = grid_primal(0.1, 0.05)
        grid_mean = float(np.linspace(-3, 3, 2001) @ p)
        assert dist.mean()[0] > toy.smoothed_mean
        assert dist.mean()[0] == pytest.approx(grid_mean, abs=2e-2)

    def test_resampled(self, toy):
        sol = worst_case_value(toy)
        dist = worst_case_sample(toy, sol.lambda_star, make_rng(1), count=20_000)
        assert dist.masses.shape == (20_000,)
        assert dist.mean()[0] == pytest.approx(math.sqrt(0.1), abs=0.02)

    def test_constant_function_uniform(self):
        prob = DroProblem.from_function([[0.0], [1.0]], lambda z: np.ones(len(z)), 0.5, 0.1, 10, make_rng(0))
        w = worst_case_weights(prob, 1.0)
        np.testing.assert_allclose(w, 1.0 / 20)

    def test_large_lambda_uniform(self, toy):
        w = worst_case_weights(toy, 1e12)
        np.testing.assert_allclose(w, 1.0 / toy.f_draws.size, rtol=1e-6)

    def test_infinite_lambda_rejected(self, toy):
        with pytest.raises(ValueError):
            worst_case_sample(toy, math.inf)

    def test_indicator(self):
        f = f_indicator(0.5)
        np.testing.assert_array_equal(f(np.array([[0.0], [1.0]])), [0.0, 1.0])
