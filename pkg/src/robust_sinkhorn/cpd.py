"""Offline change-point detection with sliding-window LFD detectors and CUSUM.

At each candidate time ``t`` (0-based, ``w <= t <= T - w``) the window
``x[t-w : t]`` plays H0 and ``x[t : t+w]`` plays H1.  The statistic is
``D_t = -score(x_t)`` (or minus the mean score over the post-window when
``score_window`` is set) and ``S_t = max(0, S_{t-1} + D_t)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .detector import DetectorModel, scores
from .distributions import make_rng
from .generating import Family
from .lfd import LFDProblem, SolverConfig, discretize, solve_lfd

# pre-change / post-change probabilities for case 1 (support size 10)
CASE1_POST = np.array([1, 2, 3, 12, 12, 12, 12, 3, 2, 1], dtype=float) / 60.0
MIN_CALIBRATION_TRIALS = 20


@dataclass(frozen=True)
class ScanConfig:
    window: int = 20
    epsilon: float = 1.0
    rho_bar: float = 0.03
    m: int = 50
    family: str = "quad"
    k: int = 5
    max_iters: int = 200
    gap_tol: float = 1e-4
    score_window: bool = False

    def solver(self) -> SolverConfig:
        return SolverConfig(max_iters=self.max_iters, gap_tol=self.gap_tol)


@dataclass
class ChangePointScan:
    D: np.ndarray
    S: np.ndarray
    threshold: float | None = None
    detected_at: int | None = None

    def apply_threshold(self, threshold: float) -> "ChangePointScan":
        return ChangePointScan(self.D, self.S, threshold, first_crossing(self.S, threshold))


def cusum(D) -> np.ndarray:
    """``S_t = max(0, S_{t-1} + D_t)`` with ``S_{-1} = 0``."""
    D = np.asarray(D, dtype=float)
    S = np.empty_like(D)
    s = 0.0
    for t, d in enumerate(D):
        s = max(0.0, s + d)
        S[t] = s
    return S


def first_crossing(S, threshold: float) -> int | None:
    hit = np.flatnonzero(np.asarray(S) > threshold)
    return int(hit[0]) if hit.size else None


def detection_statistics(series, config: ScanConfig, seed: int) -> np.ndarray:
    """Per-time ``D_t``; zero outside the evaluable range."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, w = x.shape[0], int(config.window)
    if w < 1 or T < 2 * w:
        raise ValueError("series must hold at least two windows")
    family = Family.parse(config.family)
    solver = config.solver()
    D = np.zeros(T)
    for t in range(w, T - w + 1):
        problem = LFDProblem(x[t - w:t], x[t:t + w], config.epsilon, config.rho_bar,
                             family, config.m, seed=_time_seed(seed, t))
        lfd = solve_lfd(discretize(problem), family, solver)
        model = DetectorModel.from_lfd(lfd, config.k)
        target = x[t:t + w] if config.score_window else x[t:t + 1]
        D[t] = -float(np.mean(scores(model, target)))
    return D


def _time_seed(seed: int, t: int) -> int:
    return int(make_rng(seed, t).integers(0, 2**63 - 1))


def scan(series, config: ScanConfig | None = None, seed: int = 0) -> ChangePointScan:
    config = config or ScanConfig()
    D = detection_statistics(series, config, seed)
    S = cusum(D)
    w = int(config.window)
    S[:w] = 0.0
    return ChangePointScan(D, S)


# --------------------------------------------------------------- synthetic data


def _one_hot(labels, size=10):
    out = np.zeros((labels.shape[0], size))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def case_sampler(case_id: int) -> tuple[Callable, Callable]:
    """``(pre, post)`` samplers ``f(count, rng) -> (count, d)`` for a synthetic case."""
    if case_id == 1:
        def pre(count, rng):
            return _one_hot(rng.integers(0, 10, size=count))

        def post(count, rng):
            return _one_hot(rng.choice(10, size=count, p=CASE1_POST))
    elif case_id == 2:
        def pre(count, rng):
            return rng.standard_normal((count, 20))

        def post(count, rng):
            scale = np.where(rng.random(count) < 0.2, math.sqrt(0.1), 1.0)
            return rng.standard_normal((count, 20)) * scale[:, None]
    elif case_id == 3:
        cov = np.array([[0.5, 0.1], [0.1, 0.5]])
        chol = np.linalg.cholesky(cov)

        def pre(count, rng):
            return rng.standard_normal((count, 2))

        def post(count, rng):
            return np.array([1.0, 0.0]) + rng.standard_normal((count, 2)) @ chol.T
    elif case_id == 4:
        def pre(count, rng):
            return rng.standard_normal((count, 1))

        def post(count, rng):
            return rng.laplace(1.0, 0.5 / math.sqrt(2.0), size=(count, 1))
    else:
        raise ValueError(f"unknown case {case_id}; expected 1-4")
    return pre, post


def synth_case(case_id: int, T: int = 200, K: int = 100, rng=None) -> np.ndarray:
    """Series whose first ``K`` observations are pre-change, the rest post-change."""
    if not 0 <= K < T:
        raise ValueError("change time must satisfy 0 <= K < T")
    pre, post = case_sampler(case_id)
    rng = make_rng(0 if rng is None else rng)
    return np.concatenate([pre(K, rng), post(T - K, rng)])


def null_series(case_id: int, T: int = 200, rng=None) -> np.ndarray:
    pre, _ = case_sampler(case_id)
    return pre(T, make_rng(0 if rng is None else rng))


# ------------------------------------------------------------------ experiments


def _max_stat(args):
    series, config, seed = args
    return scan(series, config, seed)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def calibrate_threshold(null_sampler: Callable, config: ScanConfig, alpha: float = 0.05,
                        trials: int = 100, seed: int = 0, jobs: int = 1):
    """Empirical ``(1 - alpha)`` quantile of ``max_t S_t`` over null streams.

    ``null_sampler(rng)`` returns one no-change series.  Returns
    ``(threshold, max_statistics)``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if trials < MIN_CALIBRATION_TRIALS:
        raise ValueError(f"calibration needs at least {MIN_CALIBRATION_TRIALS} null trials")
    items = [(null_sampler(make_rng(seed, 1, j)), config, int(make_rng(seed, 2, j).integers(2**62)))
             for j in range(trials)]
    maxes = np.array([float(np.max(s.S)) for s in _map(_max_stat, items, jobs)])
    return threshold_from_maxima(maxes, alpha), maxes


def threshold_from_maxima(maxes, alpha: float) -> float:
    return float(np.quantile(np.asarray(maxes, dtype=float), 1.0 - alpha, method="higher"))


@dataclass
class CpdResult:
    case: int
    threshold: float
    power: float
    false_alarm_rate: float
    mean_delay: float | None
    per_trial: list = field(default_factory=list)
    null_maxima: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def run_cpd(case_id: int, config: ScanConfig | None = None, T: int = 200, K: int = 100,
            alpha: float = 0.05, trials: int = 100, fa_trials: int | None = None,
            seed: int = 0, jobs: int = 1, series: np.ndarray | None = None) -> CpdResult:
    """Calibrate on null streams, then measure power and delay on change streams.

    Power is the fraction of change streams whose CUSUM crosses the
    threshold; the false-alarm rate is measured on fresh null streams.  With
    ``series`` given, only that series is scanned (after calibration).
    """
    config = config or ScanConfig()
    fa_trials = trials if fa_trials is None else fa_trials
    pre, post = case_sampler(case_id)

    def null_sampler(rng):
        return pre(T, rng)

    threshold, maxes = calibrate_threshold(null_sampler, config, alpha, trials, seed, jobs)
    if series is not None:
        streams = [np.asarray(series, dtype=float)]
    else:
        streams = [synth_case(case_id, T, K, make_rng(seed, 3, j)) for j in range(trials)]
    items = [(s, config, int(make_rng(seed, 4, j).integers(2**62))) for j, s in enumerate(streams)]
    scans = [s.apply_threshold(threshold) for s in _map(_max_stat, items, jobs)]
    fa_items = [(null_sampler(make_rng(seed, 5, j)), config, int(make_rng(seed, 6, j).integers(2**62)))
                for j in range(fa_trials)]
    fa_scans = [s.apply_threshold(threshold) for s in _map(_max_stat, fa_items, jobs)]

    detected = [s.detected_at for s in scans]
    hits = [d for d in detected if d is not None]
    delays = [d - K for d in hits if d >= K]
    per_trial = [{"trial": j, "detected_at": d, "max_S": float(np.max(s.S))}
                 for j, (d, s) in enumerate(zip(detected, scans))]
    return CpdResult(
        case=case_id,
        threshold=threshold,
        power=len(hits) / len(scans),
        false_alarm_rate=(float(np.mean([s.detected_at is not None for s in fa_scans]))
                          if fa_scans else float("nan")),
        mean_delay=float(np.mean(delays)) if delays else None,
        per_trial=per_trial,
        null_maxima=[float(v) for v in maxes],
        config={**asdict(config), "T": T, "K": K, "alpha": alpha, "trials": trials,
                "fa_trials": fa_trials, "seed": seed},
    )
