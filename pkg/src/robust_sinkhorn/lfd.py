"""Least favorable distributions on a Monte-Carlo support.

For each training index ``i`` the kernels of ``x_i^0`` and ``x_i^1`` are
sampled ``m`` times each; the ``2m`` draws form block ``i`` of a common
support of ``2mn`` atoms.  With base weights ``w_{i,k,j} = r^k(z_ij) / (2m)``
the decision variables are unnormalized masses ``p_k >= 0`` with

    sum_j p_{i,k,j} = c_{i,k} = sum_j w_{i,k,j}          (every block i)
    sum_{i,j} p_{i,k,j} log(p_{i,k,j} / w_{i,k,j}) <= B_k = n rho_bar_k / eps

and the LFDs are ``P_k = p_k / sum_i c_{i,k}``.  The objective
``J = sum (P0 + P1) psi(P0 / (P0 + P1))`` is concave, so it is maximized by
Frank-Wolfe: the linear oracle over each KL ball is a Gibbs reweighting of
``w`` whose temperature is set so the entropy budget is met.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .distributions import (
    SampleSet,
    gaussian_kernel_sample,
    log_importance_ratios,
    make_rng,
    mixture_support,
)
from .generating import CLAMP, Family, posterior_ratio, psi, psi_prime, tstar

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LFDProblem:
    samples0: SampleSet
    samples1: SampleSet
    epsilon: float
    rho_bar: tuple
    family: Family = Family.QUADRATIC_HINGE
    m: int = 100
    seed: int = 0

    def __post_init__(self):
        s0, s1 = SampleSet.of(self.samples0), SampleSet.of(self.samples1)
        if len(s0) != len(s1):
            raise ValueError("both hypotheses need the same number of samples")
        if s0.dim != s1.dim:
            raise ValueError("sample sets differ in dimension")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        rb = self.rho_bar
        rb = (float(rb), float(rb)) if np.ndim(rb) == 0 else tuple(float(v) for v in rb)
        if len(rb) != 2 or min(rb) < 0:
            raise ValueError("rho_bar must be a pair of nonnegative reals")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        object.__setattr__(self, "samples0", s0)
        object.__setattr__(self, "samples1", s1)
        object.__setattr__(self, "rho_bar", rb)
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "m", int(self.m))

    @property
    def n(self) -> int:
        return len(self.samples0)


@dataclass(frozen=True)
class DiscretizedLFDProblem:
    """Finite form of the LFD program.

    ``atoms`` has shape ``(n, 2m, d)``; ``logw[k]`` holds ``log w_{i,k,j}``
    with shape ``(n, 2m)``; ``c[k]`` the block sums; ``budget[k]`` the
    entropy budgets.
    """

    atoms: np.ndarray
    logw: np.ndarray
    budget: tuple

    def __post_init__(self):
        logw = np.array(self.logw, dtype=float)
        atoms = np.array(self.atoms, dtype=float)
        if logw.ndim != 3 or logw.shape[0] != 2:
            raise ValueError("logw must have shape (2, n, 2m)")
        if atoms.shape[:2] != logw.shape[1:]:
            raise ValueError("atoms do not match the weight layout")
        b = tuple(float(v) for v in self.budget)
        if len(b) != 2 or min(b) < 0:
            raise ValueError("budgets must be two nonnegative reals")
        object.__setattr__(self, "logw", logw)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "budget", b)

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.logw)

    @property
    def c(self) -> np.ndarray:
        return np.sum(self.w, axis=2)

    @property
    def n(self) -> int:
        return self.logw.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.logw.shape[1] * self.logw.shape[2]

    def flat_atoms(self) -> np.ndarray:
        return self.atoms.reshape(self.n_atoms, -1)

    def swapped(self) -> "DiscretizedLFDProblem":
        """Same support with the roles of the hypotheses exchanged."""
        return DiscretizedLFDProblem(self.atoms, self.logw[::-1], self.budget[::-1])


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    gap_tol: float = 1e-6
    step: str = "line_search"  # or "standard" for 2 / (t + 2)
    line_search_tol: float = 1e-10
    entropy_tol: float = 1e-10
    clamp: float = CLAMP


@dataclass(frozen=True)
class LFDPair:
    """LFDs on the common support with the induced detector values."""

    atoms: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    r: np.ndarray
    tstar: np.ndarray
    family: Family
    objective: float
    entropy: tuple
    budget: tuple
    iterations: int = 0
    gap: float = 0.0
    converged: bool = True
    history: list = field(default_factory=list, repr=False, compare=False)


# ------------------------------------------------------------------ discretize


def discretize(problem: LFDProblem) -> DiscretizedLFDProblem:
    """Sample the kernel clouds and form weights, block sums and budgets."""
    rng = make_rng(problem.seed)
    n, m, eps = problem.n, problem.m, problem.epsilon
    atoms = np.empty((n, 2 * m, problem.samples0.dim))
    logw = np.empty((2, n, 2 * m))
    for i in range(n):
        x0, x1 = problem.samples0[i], problem.samples1[i]
        cloud0 = gaussian_kernel_sample(x0, eps, m, rng)
        cloud1 = gaussian_kernel_sample(x1, eps, m, rng)
        z = mixture_support(cloud0, cloud1).points
        atoms[i] = z
        lr0, lr1 = log_importance_ratios(z, x0, x1, eps)
        logw[0, i] = lr0 - math.log(2 * m)
        logw[1, i] = lr1 - math.log(2 * m)
    budget = tuple(n * rb / eps for rb in problem.rho_bar)
    return DiscretizedLFDProblem(atoms, logw, budget)


# ------------------------------------------------------------------- objective


def objective(p0, p1, family) -> float:
    """``sum (p0 + p1) psi(p0 / (p0 + p1))`` over atoms (zero-mass atoms add 0)."""
    family = Family.parse(family)
    p0 = np.asarray(p0, dtype=float).reshape(-1)
    p1 = np.asarray(p1, dtype=float).reshape(-1)
    tot = p0 + p1
    return float(np.sum(tot * psi(family, posterior_ratio(p0, p1))))


def objective_gradient(p0, p1, family, clamp: float = CLAMP):
    """Partials of ``objective``: ``psi + (1 - r) psi'`` and ``psi - r psi'``.

    ``r`` is clamped to ``[clamp, 1 - clamp]`` before evaluating ``psi'``.
    """
    family = Family.parse(family)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    r = np.clip(posterior_ratio(p0, p1), clamp, 1.0 - clamp)
    ps, dps = psi(family, r), psi_prime(family, r, clamp)
    return ps + (1.0 - r) * dps, ps - r * dps


def entropy_usage(p, logw) -> float:
    """``sum p log(p / w)``; the quantity bounded by the entropy budget."""
    return float(kernels.block_entropy(np.ascontiguousarray(p, dtype=float),
                                       np.ascontiguousarray(logw, dtype=float)))


# ------------------------------------------------------------------------- LMO


@dataclass
class LmoResult:
    p: np.ndarray
    theta: float  # inverse temperature; inf for the argmax vertex
    entropy: float


def _vertex(logw, grad, c):
    n, m = grad.shape
    p = np.zeros((n, m))
    # masked argmax: atoms with zero weight are not reachable
    masked = np.where(np.isfinite(logw), grad, -np.inf)
    idx = np.argmax(masked, axis=1)  # lowest index wins ties
    p[np.arange(n), idx] = c
    return p


def kl_ball_lmo(grad, logw, budget: float, tol: float = 1e-10,
                theta_hint: float | None = None) -> LmoResult:
    """Maximize ``<grad, p>`` over block-sum hyperplanes intersected with a KL ball.

    The maximizer is ``p_ij = c_i softmax_j(log w_ij + theta grad_ij)`` where
    the inverse temperature ``theta`` makes the entropy equal ``budget``
    (entropy grows with ``theta``).  ``theta`` is found by safeguarded Newton
    iterations inside a bisection bracket on ``log theta``.
    """
    if budget < 0:
        raise ValueError("entropy budget must be nonnegative")
    grad = np.ascontiguousarray(grad, dtype=float)
    logw = np.ascontiguousarray(logw, dtype=float)
    if grad.shape != logw.shape or grad.ndim != 2:
        raise ValueError("grad and weights must share an (n, 2m) layout")
    logc = np.log(np.sum(np.exp(logw), axis=1))
    c = np.exp(logc)
    if budget == 0:
        return LmoResult(np.exp(logw), 0.0, 0.0)

    vert = _vertex(logw, grad, c)
    h_vert = entropy_usage(vert, logw)
    if h_vert <= budget:
        return LmoResult(vert, math.inf, h_vert)

    finite = np.isfinite(logw)
    spread = float(np.max(np.where(finite, grad, -np.inf)) - np.min(np.where(finite, grad, np.inf)))
    if spread <= 0:
        return LmoResult(np.exp(logw), 0.0, 0.0)

    def ent(theta):
        p, h, dh = kernels.gibbs(logw, grad, logc, theta)
        return p, h - budget, dh

    # bracket: f(lo) <= 0 < f(hi), in log theta
    t0 = theta_hint if theta_hint and math.isfinite(theta_hint) and theta_hint > 0 else 1.0 / spread
    lo = hi = math.log(t0)
    p, f, dh = ent(t0)
    best_feasible = None
    if f <= 0:
        best_feasible = (p, t0, f + budget)
        for _ in range(200):
            hi += math.log(4.0)
            p, f, dh = ent(math.exp(hi))
            if f > 0:
                break
            lo = hi
            best_feasible = (p, math.exp(hi), f + budget)
        else:
            return LmoResult(*best_feasible)
    else:
        for _ in range(200):
            lo -= math.log(4.0)
            p, f, dh = ent(math.exp(lo))
            if f <= 0:
                best_feasible = (p, math.exp(lo), f + budget)
                break
            hi = lo
        else:  # pragma: no cover - entropy -> 0 as theta -> 0
            return LmoResult(np.exp(logw), 0.0, 0.0)

    # Newton on u = log theta: dH/du = theta * dH/dtheta
    u = 0.5 * (lo + hi)
    for _ in range(200):
        theta = math.exp(u)
        p, f, dh = ent(theta)
        if f <= 0:
            lo = u
            if best_feasible is None or f + budget > best_feasible[2]:
                best_feasible = (p, theta, f + budget)
            if -f <= tol * max(1.0, budget):
                break
        else:
            hi = u
        if hi - lo < 1e-15:
            break
        slope = theta * dh
        step = u - f / slope if slope > 0 else None
        u = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    return LmoResult(*best_feasible)


# ---------------------------------------------------------------------- solver


def _line_search(a, da, b, db, code, tol):
    """Golden-section maximization of the concave segment objective on [0, 1]."""
    lo, hi = 0.0, 1.0
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1 = kernels.segment_objective(a, da, b, db, x1, code)
    f2 = kernels.segment_objective(a, da, b, db, x2, code)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = kernels.segment_objective(a, da, b, db, x1, code)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = kernels.segment_objective(a, da, b, db, x2, code)
    cands = [(0.0, kernels.segment_objective(a, da, b, db, 0.0, code)),
             (1.0, kernels.segment_objective(a, da, b, db, 1.0, code)),
             (x1, f1), (x2, f2)]
    return max(cands, key=lambda t: (t[1], -t[0]))


def solve_lfd(problem: DiscretizedLFDProblem, family=Family.QUADRATIC_HINGE,
              config: SolverConfig | None = None, record_history: bool = False) -> LFDPair:
    """Frank-Wolfe ascent from the kernel-smoothed start ``p_k = w_k``."""
    config = config or SolverConfig()
    family = Family.parse(family)
    code = family.code
    logw = problem.logw
    w = np.exp(logw)
    c = np.sum(w, axis=2)
    total = np.sum(c, axis=1)  # normalizers C_k
    shape = logw.shape[1:]
    p = [w[0].copy(), w[1].copy()]

    def normalized(q0, q1):
        return (q0.reshape(-1) / total[0], q1.reshape(-1) / total[1])

    a, b = normalized(*p)
    J = kernels.pair_objective(a, b, code)
    history = [J] if record_history else []
    theta = [None, None]
    gap = math.inf
    it = 0
    converged = False
    for it in range(1, config.max_iters + 1):
        g0, g1 = kernels.pair_gradient(a, b, code, config.clamp)
        grads = (g0.reshape(shape) / total[0], g1.reshape(shape) / total[1])
        s = []
        for k in (0, 1):
            res = kl_ball_lmo(grads[k], logw[k], problem.budget[k],
                              tol=config.entropy_tol, theta_hint=theta[k])
            theta[k] = res.theta if math.isfinite(res.theta) and res.theta > 0 else None
            s.append(res.p)
        gap = float(np.sum(grads[0] * (s[0] - p[0])) + np.sum(grads[1] * (s[1] - p[1])))
        if gap <= config.gap_tol * max(abs(J), 1e-12):
            converged = True
            it -= 1
            break
        sa, sb = normalized(*s)
        da, db = sa - a, sb - b
        if config.step == "standard":
            gamma = 2.0 / (it + 2.0)
            J_new = kernels.segment_objective(a, da, b, db, gamma, code)
        else:
            gamma, J_new = _line_search(a, da, b, db, code, config.line_search_tol)
            if gamma == 0.0:
                # no ascent along the FW direction (kink of a nonsmooth psi)
                break
        p = [p[0] + gamma * (s[0] - p[0]), p[1] + gamma * (s[1] - p[1])]
        a, b = normalized(*p)
        J = J_new
        if record_history:
            history.append(J)

    a, b = normalized(*p)
    J = kernels.pair_objective(a, b, code)
    r = posterior_ratio(a, b)
    return LFDPair(
        atoms=problem.flat_atoms(),
        p0=a,
        p1=b,
        r=r,
        tstar=tstar(family, np.clip(r, config.clamp, 1.0 - config.clamp)),
        family=family,
        objective=float(J),
        entropy=(entropy_usage(p[0], logw[0]), entropy_usage(p[1], logw[1])),
        budget=problem.budget,
        iterations=it,
        gap=float(gap),
        converged=converged,
        history=history,
    )


def fit_lfd(samples0, samples1, epsilon: float, rho_bar, family=Family.QUADRATIC_HINGE,
            m: int = 100, seed: int = 0, config: SolverConfig | None = None) -> LFDPair:
    """Discretize and solve in one call."""
    problem = LFDProblem(samples0, samples1, epsilon, rho_bar, family, m, seed)
    return solve_lfd(discretize(problem), problem.family, config)


# ------------------------------------------------------------ brute-force oracle


def _interval_grid(logw_row, c, budget, resolution):
    """Exact feasible interval of the first atom's mass for a two-atom block."""
    w1, w2 = np.exp(logw_row)

    def h(x):
        v = 0.0
        if x > 0:
            v += x * math.log(x / w1)
        if c - x > 0:
            v += (c - x) * math.log((c - x) / w2)
        return v - budget

    lo = 0.0 if h(0.0) <= 0 else brentq(h, 0.0, w1, xtol=1e-15, rtol=1e-15)
    hi = c if h(c) <= 0 else brentq(h, w1, c, xtol=1e-15, rtol=1e-15)
    x = np.linspace(lo, hi, resolution)
    return np.stack([x, c - x], axis=1)[:, None, :]


def _simplex_grid(logw, c, budget, resolution):
    n, m = logw.shape
    steps = resolution - 1
    per_block = []
    for i in range(n):
        comps = [t for t in itertools.product(range(steps + 1), repeat=m - 1) if sum(t) <= steps]
        pts = np.array([list(t) + [steps - sum(t)] for t in comps], dtype=float) / steps * c[i]
        per_block.append(pts)
    combos = itertools.product(*per_block)
    pts = np.array([np.stack(cb) for cb in combos])
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(pts > 0, pts * (np.log(pts) - logw[None]), 0.0).sum(axis=(1, 2))
    return pts[ent <= budget + 1e-12]


def brute_force_lfd(problem: DiscretizedLFDProblem, family=Family.QUADRATIC_HINGE,
                    resolution: int = 400, max_points: int = 2_000_000) -> LFDPair:
    """Exhaustive grid search over the feasible masses of a tiny instance.

    Two-atom blocks use the exact feasible interval (found by root finding);
    larger blocks use a simplex lattice filtered by the entropy budget.
    """
    family = Family.parse(family)
    if problem.n_atoms > 6:
        raise ValueError("brute force is limited to 6 atoms")
    n, m = problem.logw.shape[1:]
    w = problem.w
    c = np.sum(w, axis=2)
    free = n * (m - 1)
    if resolution ** free > max_points:
        raise ValueError("instance too large for the requested resolution")
    grids = []
    for k in (0, 1):
        if n == 1 and m == 2:
            grids.append(_interval_grid(problem.logw[k, 0], c[k, 0], problem.budget[k], resolution))
        else:
            grids.append(_simplex_grid(problem.logw[k], c[k], problem.budget[k], resolution))
    total = c.sum(axis=1)
    A = grids[0].reshape(len(grids[0]), -1) / total[0]
    B = grids[1].reshape(len(grids[1]), -1) / total[1]
    vals = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        vals += kernels.numpy_backend.pair_values(A[:, j][:, None], B[:, j][None, :], family.code)
    i0, i1 = np.unravel_index(np.argmax(vals), vals.shape)
    a, b = A[i0], B[i1]
    r = posterior_ratio(a, b)
    return LFDPair(
        atoms=problem.flat_atoms(),
        p0=a,
        p1=b,
        r=r,
        tstar=tstar(family, np.clip(r, CLAMP, 1 - CLAMP)),
        family=family,
        objective=float(vals[i0, i1]),
        entropy=(entropy_usage(grids[0][i0], problem.logw[0]),
                 entropy_usage(grids[1][i1], problem.logw[1])),
        budget=problem.budget,
        iterations=int(vals.size),
    )
