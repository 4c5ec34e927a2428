"""Worst-case expectation of a fixed function over a Sinkhorn ball.

For nominal points ``x`` with kernel draws ``z ~ N(x, eps I)`` the worst-case
value of ``E_P[f]`` over the ball of regularized radius ``rho_bar`` is

    inf_{lam >= 0}  lam * rho_bar + lam * eps * mean_x log mean_z exp(f(z) / (lam eps))

estimated here with Monte-Carlo draws.  The maximizing distribution tilts
each kernel by ``exp(f / (lam* eps))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .distributions import DiscreteDistribution, SampleSet, make_rng

LAMBDA_BRACKET = (1e-8, 1e8)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DroProblem:
    """``f_draws[i, j] = f(z_ij)`` for the j-th kernel draw around nominal point i."""

    f_draws: np.ndarray
    epsilon: float
    rho_bar: float
    draws: np.ndarray | None = None

    def __post_init__(self):
        f = np.array(self.f_draws, dtype=float)
        if f.ndim == 1:
            f = f[None, :]
        if f.ndim != 2 or f.size == 0:
            raise ValueError("f_draws must be a nonempty (n_nominal, m) array")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.rho_bar < 0:
            raise ValueError("rho_bar must be nonnegative")
        if self.draws is not None and np.shape(self.draws)[:2] != f.shape:
            raise ValueError("draws do not match f_draws")
        object.__setattr__(self, "f_draws", f)

    @classmethod
    def from_function(cls, nominal, f: Callable, epsilon: float, rho_bar: float,
                      m: int, rng) -> "DroProblem":
        """Sample ``m`` kernel draws per nominal point and evaluate ``f`` row-wise."""
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        pts = SampleSet.of(nominal).points
        rng = make_rng(rng)
        g = rng.standard_normal((pts.shape[0], int(m), pts.shape[1]))
        draws = pts[:, None, :] + math.sqrt(epsilon) * g
        fv = np.asarray(f(draws.reshape(-1, pts.shape[1])), dtype=float)
        return cls(fv.reshape(pts.shape[0], int(m)), epsilon, rho_bar, draws)

    @property
    def smoothed_mean(self) -> float:
        return float(np.mean(self.f_draws))


@dataclass(frozen=True)
class DualSolution:
    value: float
    lambda_star: float  # math.inf when the radius does not bind
    iterations: int = 0

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lambda_star)


def dual_objective(lam: float, problem: DroProblem) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    scale = lam * problem.epsilon
    f = problem.f_draws
    m = f.shape[1]
    lme = logsumexp(f / scale, axis=1) - math.log(m)
    return float(lam * problem.rho_bar + scale * np.mean(lme))


def worst_case_value(problem: DroProblem, rtol: float = 1e-9, max_iter: int = 400) -> DualSolution:
    """Minimize the dual by golden-section search on ``log lambda``.

    A non-binding radius (``rho_bar = 0``, or a minimizer pinned at the top of
    the bracket) is reported as ``lambda_star = inf`` with the smoothed mean.
    """
    if problem.rho_bar < 0:
        raise ValueError("rho_bar must be nonnegative")
    if problem.rho_bar == 0 or np.ptp(problem.f_draws) == 0:
        if problem.rho_bar == 0:
            return DualSolution(problem.smoothed_mean, math.inf)
        # constant f: the dual equals lam*rho_bar + c, infimum approached at 0
        return DualSolution(float(problem.f_draws.flat[0]), LAMBDA_BRACKET[0])

    def obj(u):
        return dual_objective(math.exp(u), problem)

    lo, hi = math.log(LAMBDA_BRACKET[0]), math.log(LAMBDA_BRACKET[1])
    a = hi - _INV_PHI * (hi - lo)
    b = lo + _INV_PHI * (hi - lo)
    fa, fb = obj(a), obj(b)
    it = 0
    prev = min(fa, fb)
    while it < max_iter:
        it += 1
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - _INV_PHI * (hi - lo)
            fa = obj(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + _INV_PHI * (hi - lo)
            fb = obj(b)
        best = min(fa, fb)
        if hi - lo < 1e-12 or (it > 20 and abs(prev - best) <= rtol * max(abs(best), 1e-300)
                               and hi - lo < 1e-6):
            break
        prev = best
    u = a if fa <= fb else b
    value = min(fa, fb)
    top = math.log(LAMBDA_BRACKET[1])
    if top - u < 1e-3 and problem.smoothed_mean <= value:
        return DualSolution(problem.smoothed_mean, math.inf, it)
    return DualSolution(value, math.exp(u), it)


def worst_case_weights(problem: DroProblem, lambda_star: float) -> np.ndarray:
    """Self-normalized tilt weights, rows summing to ``1 / n_nominal``."""
    if not (lambda_star > 0 and math.isfinite(lambda_star)):
        raise ValueError("lambda_star must be finite and positive; "
                         "for a non-binding radius sample the kernels directly")
    logits = problem.f_draws / (lambda_star * problem.epsilon)
    w = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    return w / problem.f_draws.shape[0]


def worst_case_sample(problem: DroProblem, lambda_star: float, rng=None,
                      count: int | None = None) -> DiscreteDistribution:
    """Worst-case distribution supported on the kernel draws.

    Without ``count`` every draw is returned with its tilt weight.  With
    ``count`` the distribution is resampled: a nominal point is picked
    uniformly, then one of its draws with probability proportional to the
    tilt, giving ``count`` equally weighted atoms.
    """
    if problem.draws is None:
        raise ValueError("problem carries no draw locations")
    w = worst_case_weights(problem, lambda_star)
    n, m = w.shape
    draws = np.asarray(problem.draws).reshape(n * m, -1)
    if count is None:
        return DiscreteDistribution(draws, w.reshape(-1))
    if count < 1:
        raise ValueError("count must be positive")
    rng = make_rng(0 if rng is None else rng)
    rows = rng.integers(0, n, size=count)
    u = rng.random(count)
    cdf = np.cumsum(w * n, axis=1)
    cols = np.minimum(np.array([np.searchsorted(cdf[i], x, side="right") for i, x in zip(rows, u)]),
                      m - 1)
    return DiscreteDistribution(draws[rows * m + cols], np.full(count, 1.0 / count))


# built-in test functions for the command line
def f_mean(z: np.ndarray) -> np.ndarray:
    return np.mean(np.atleast_2d(z), axis=1)


def f_indicator(threshold: float) -> Callable:
    def f(z):
        return (f_mean(z) > threshold).astype(float)
    return f
