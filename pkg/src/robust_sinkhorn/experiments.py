"""Reproduction runners: HDGM composite testing, MNIST batches, toy LFDs, CV."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cpd
from .detector import H0, H1, DetectorModel, batch_errors, make_batches, scores
from .distributions import SampleSet, load_idx, make_rng
from .generating import Family
from .lfd import LFDPair, LFDProblem, SolverConfig, discretize, solve_lfd

TOY_H0 = (0.39, -0.23)
TOY_H1 = (0.74, 1.62)


@dataclass(frozen=True)
class FitConfig:
    epsilon: float = 0.1
    rho_bar: float = 0.03
    m: int = 50
    family: str = "quad"
    k: int = 5
    max_iters: int = 500
    gap_tol: float = 1e-6

    def solver(self) -> SolverConfig:
        return SolverConfig(max_iters=self.max_iters, gap_tol=self.gap_tol)

    def fit(self, samples0, samples1, seed: int, **overrides) -> DetectorModel:
        cfg = self if not overrides else FitConfig(**{**asdict(self), **overrides})
        problem = LFDProblem(samples0, samples1, cfg.epsilon, cfg.rho_bar,
                             cfg.family, cfg.m, seed)
        lfd = solve_lfd(discretize(problem), problem.family, cfg.solver())
        return DetectorModel.from_lfd(lfd, cfg.k)


def single_sample_risk(model: DetectorModel, test0, test1) -> float:
    s0, s1 = scores(model, test0), scores(model, test1)
    return 0.5 * (float(np.mean(s0 < 0)) + float(np.mean(s1 >= 0)))


# ------------------------------------------------------------------------ HDGM


def hdgm_means(which: str, dim: int = 100) -> np.ndarray:
    """Component means ``(-v, +v)``: ``v`` all ones (e) or half +1 / half -1 (f)."""
    if dim % 2:
        raise ValueError("dimension must be even")
    if which in ("e", "e-model"):
        v = np.ones(dim)
    elif which in ("f", "f-model"):
        v = np.concatenate([np.ones(dim // 2), -np.ones(dim // 2)])
    else:
        raise ValueError("which must be 'e' or 'f'")
    return np.stack([-v, v])


def hdgm_sample(which: str, count: int, rng, dim: int = 100) -> SampleSet:
    """Equal-weight two-component Gaussian mixture with identity covariance."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = make_rng(rng)
    means = hdgm_means(which, dim)
    comp = rng.integers(0, 2, size=count)
    return SampleSet(means[comp] + rng.standard_normal((count, dim)))


def run_hdgm(ns=range(1, 11), trials: int = 10, n_test: int = 1000,
             config: FitConfig | None = None, seed: int = 0, dim: int = 100) -> dict:
    """Mean single-sample misclassification per training size."""
    config = config or FitConfig()
    table = {}
    for n in ns:
        risks = []
        for trial in range(trials):
            rng = make_rng(seed, n, trial)
            tr0 = hdgm_sample("e", n, rng, dim)
            tr1 = hdgm_sample("f", n, rng, dim)
            te0 = hdgm_sample("e", n_test, rng, dim)
            te1 = hdgm_sample("f", n_test, rng, dim)
            model = config.fit(tr0, tr1, seed=int(rng.integers(2**62)))
            risks.append(single_sample_risk(model, te0, te1))
        table[int(n)] = {"mean_risk": float(np.mean(risks)), "risks": risks}
    return {"experiment": "hdgm", "risk": table,
            "config": {**asdict(config), "trials": trials, "n_test": n_test, "seed": seed,
                       "dim": dim, "ns": [int(n) for n in ns]}}


# ----------------------------------------------------------------------- MNIST


def mnist_trial(pools, n_train: int, config: "FitConfig", rng):
    """Draw ``n_train`` training images per class, fit, and keep the rest for testing.

    Returns ``(model, test0, test1)``.
    """
    train, test = [], []
    for pool in pools:
        if pool.shape[0] <= n_train:
            raise ValueError("not enough images to hold out a test set")
        idx = rng.permutation(pool.shape[0])
        train.append(pool[idx[:n_train]])
        test.append(pool[idx[n_train:]])
    model = config.fit(train[0], train[1], seed=int(rng.integers(2**62)))
    return model, test[0], test[1]


def run_mnist(images_path, labels_path, digits=(1, 2), n_train: int = 5,
              batch_sizes=range(1, 11), batches: int = 1000, trials: int = 10,
              config: FitConfig | None = None, seed: int = 0) -> dict:
    """Batch misclassification for two digits with a handful of training images.

    Per trial ``n_train`` images per digit are drawn for training; test
    batches are drawn from the remaining images of the same digit.  Batch
    size 1 scores every remaining image once instead of sampling.
    """
    config = config or FitConfig(epsilon=0.01, rho_bar=0.03)
    data = load_idx(images_path, labels_path, digits)
    d0, d1 = digits
    if d0 not in data or d1 not in data:
        raise ValueError(f"digits {digits} not both present in the label file")
    pools = [data[d0].points, data[d1].points]
    per_size = {int(b): [] for b in batch_sizes}
    for trial in range(trials):
        rng = make_rng(seed, trial)
        model, test0, test1 = mnist_trial(pools, n_train, config, rng)
        s0, s1 = scores(model, test0), scores(model, test1)
        for b in batch_sizes:
            count = None if int(b) == 1 else batches
            b0 = make_batches(len(s0), int(b), count, rng)
            b1 = make_batches(len(s1), int(b), count, rng)
            per_size[int(b)].append(0.5 * (batch_errors(s0, b0, H0) + batch_errors(s1, b1, H1)))
    risk = {b: {"mean_risk": float(np.mean(v)), "risks": v} for b, v in per_size.items()}
    return {"experiment": "mnist", "risk": risk,
            "config": {**asdict(config), "digits": list(digits), "n_train": n_train,
                       "batches": batches, "trials": trials, "seed": seed,
                       "batch_sizes": [int(b) for b in batch_sizes]}}


# ---------------------------------------------------------------------- toy LFD


@dataclass
class ToyResult:
    epsilon: float
    lfd: LFDPair


def lfd_tsv(lfd: LFDPair) -> str:
    """Plot-ready rows: atom coordinates, p0, p1, r, Tstar."""
    d = lfd.atoms.shape[1]
    head = [f"x{j}" for j in range(d)] + ["p0", "p1", "r", "Tstar"]
    rows = ["\t".join(head)]
    cols = np.column_stack([lfd.atoms, lfd.p0, lfd.p1, lfd.r, lfd.tstar])
    rows += ["\t".join(repr(float(v)) for v in row) for row in cols]
    return "\n".join(rows) + "\n"


def run_toy_lfd(epsilons=(0.01, 0.1, 1.0), rho_bar: float = 0.03, m: int = 1000,
                seed: int = 0, family="quad", solver: SolverConfig | None = None) -> list:
    """LFDs for the fixed two-sample toy at several regularization levels."""
    out = []
    for eps in epsilons:
        problem = LFDProblem(np.array(TOY_H0)[:, None], np.array(TOY_H1)[:, None],
                             float(eps), rho_bar, family, m, seed)
        out.append(ToyResult(float(eps), solve_lfd(discretize(problem), problem.family, solver)))
    return out


def mass_within(atoms, masses, centers, radius: float) -> float:
    """Fraction of mass within ``radius`` of any of ``centers``."""
    atoms = np.asarray(atoms, dtype=float)
    centers = np.asarray(centers, dtype=float).reshape(-1, atoms.shape[1])
    dist = np.min(np.linalg.norm(atoms[:, None, :] - centers[None], axis=2), axis=1)
    masses = np.asarray(masses, dtype=float)
    return float(np.sum(masses[dist <= radius]) / np.sum(masses))


# ---------------------------------------------------------------------- CV grid


@dataclass(frozen=True)
class CvGrid:
    rho_bars: tuple = (0.0, 0.01, 0.03, 0.1, 0.3)
    epsilons: tuple = (0.01, 0.1, 1.0, 10.0)
    split: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.rho_bars or not self.epsilons:
            raise ValueError("grid must be nonempty")


@dataclass
class CvResult:
    rho_bar: float
    epsilon: float
    risk: float
    table: list = field(default_factory=list)


def cross_validate(samples0, samples1, grid: CvGrid | None = None,
                   config: FitConfig | None = None, seed: int | None = None) -> CvResult:
    """Pick ``(rho_bar, epsilon)`` by validation risk on a stratified split.

    Ties go to the smaller ``rho_bar``, then the smaller ``epsilon``.
    """
    grid = grid or CvGrid()
    config = config or FitConfig()
    s0 = SampleSet.of(samples0).points
    s1 = SampleSet.of(samples1).points
    if min(len(s0), len(s1)) < 2:
        raise ValueError("cross validation needs at least two samples per class")
    rng = make_rng(grid.seed if seed is None else seed)
    splits = []
    for s in (s0, s1):
        idx = rng.permutation(len(s))
        cut = max(1, min(len(s) - 1, int(round(grid.split * len(s)))))
        splits.append((s[idx[:cut]], s[idx[cut:]]))
    n_tr = min(len(splits[0][0]), len(splits[1][0]))
    (tr0, va0), (tr1, va1) = splits
    tr0, tr1 = tr0[:n_tr], tr1[:n_tr]
    fit_seed = int(rng.integers(2**62))
    best = None
    table = []
    for rb in sorted(grid.rho_bars):
        for eps in sorted(grid.epsilons):
            model = config.fit(tr0, tr1, fit_seed, epsilon=float(eps), rho_bar=float(rb))
            risk = single_sample_risk(model, va0, va1)
            table.append({"rho_bar": float(rb), "epsilon": float(eps), "risk": risk})
            if best is None or risk < best.risk:
                best = CvResult(float(rb), float(eps), risk)
    best.table = table
    return best


# ------------------------------------------------- change-point hyperparameters

CPD_GRID = CvGrid(epsilons=(0.1, 0.3, 1.0, 3.0, 10.0, 30.0))


def tune_scan_config(case_id: int, base: "cpd.ScanConfig | None" = None,
                     grid: CvGrid | None = None, pilots: int = 40,
                     seed: int = 0) -> tuple:
    """Cross-validate ``(rho_bar, epsilon)`` for a synthetic change-point case.

    Each pilot draws one window of pre-change and one of post-change
    observations and runs :func:`cross_validate` on them; validation risks
    are averaged over pilots.  Returns ``(config, table)`` where ``config``
    is ``base`` with the winning cell substituted.
    """
    base = base or cpd.ScanConfig()
    grid = grid or CPD_GRID
    if pilots < 1:
        raise ValueError("pilots must be positive")
    pre, post = cpd.case_sampler(case_id)
    fit = FitConfig(m=base.m, family=base.family, k=base.k,
                    max_iters=base.max_iters, gap_tol=base.gap_tol)
    total: dict = {}
    for j in range(pilots):
        rng = make_rng(seed, case_id, j)
        s0, s1 = pre(base.window, rng), post(base.window, rng)
        res = cross_validate(s0, s1, grid, fit, seed=int(rng.integers(2**62)))
        for row in res.table:
            key = (row["rho_bar"], row["epsilon"])
            total[key] = total.get(key, 0.0) + row["risk"] / pilots
    rb, eps = min(total, key=lambda key: (total[key], key))
    table = [{"rho_bar": k[0], "epsilon": k[1], "risk": v} for k, v in sorted(total.items())]
    return replace(base, rho_bar=rb, epsilon=eps), table


def resolve_family(value) -> Family:
    return Family.parse(value)


def write_json(path, payload) -> None:
    import json

    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
