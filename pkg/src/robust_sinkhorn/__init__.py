"""Robust hypothesis testing with Sinkhorn-ball ambiguity sets."""

from .detector import Decision, DetectorModel, decide, decide_batch, empirical_risk, score, scores
from .distributions import (
    DataError,
    DiscreteDistribution,
    SampleSet,
    importance_ratio,
    load_csv,
    load_idx,
    make_rng,
    rho_bar_offset,
)
from .generating import Family, ell, psi, psi_prime, tstar
from .lfd import LFDPair, LFDProblem, SolverConfig, brute_force_lfd, discretize, fit_lfd, solve_lfd
from .sinkhorn_dual import DroProblem, DualSolution, dual_objective, worst_case_sample, worst_case_value

__version__ = "0.1.0"

__all__ = [
    "DataError", "Decision", "DetectorModel", "DiscreteDistribution", "DroProblem", "DualSolution",
    "Family", "LFDPair", "LFDProblem", "SampleSet", "SolverConfig", "brute_force_lfd", "decide",
    "decide_batch", "discretize", "dual_objective", "ell", "empirical_risk", "fit_lfd",
    "importance_ratio", "load_csv", "load_idx", "make_rng", "psi", "psi_prime", "rho_bar_offset",
    "score", "scores", "solve_lfd", "tstar", "worst_case_sample", "worst_case_value",
]
