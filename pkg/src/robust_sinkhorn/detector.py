"""Weighted k-NN extension of the LFD detector, decisions and empirical risk."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .distributions import SampleSet, make_rng
from .generating import CLAMP, Family
from .lfd import LFDPair

ZERO_DISTANCE = 1e-12
H0, H1 = "H0", "H1"


@dataclass(frozen=True)
class DetectorModel:
    """Detector values ``tstar`` on the LFD support, extended by weighted k-NN."""

    atoms: np.ndarray
    tstar: np.ndarray
    family: Family = Family.QUADRATIC_HINGE
    k: int = 5
    clamp: float = CLAMP
    lfd: LFDPair | None = None

    def __post_init__(self):
        atoms = np.ascontiguousarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        tvals = np.ascontiguousarray(self.tstar, dtype=float).reshape(-1)
        if atoms.shape[0] != tvals.shape[0]:
            raise ValueError("one detector value per atom is required")
        if not 1 <= self.k <= atoms.shape[0]:
            raise ValueError("K must lie between 1 and the number of atoms")
        if not np.all(np.isfinite(tvals)):
            raise ValueError("detector values must be finite")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "tstar", tvals)
        object.__setattr__(self, "family", Family.parse(self.family))

    @classmethod
    def from_lfd(cls, lfd: LFDPair, k: int = 5) -> "DetectorModel":
        return cls(lfd.atoms, lfd.tstar, lfd.family, min(k, lfd.atoms.shape[0]), lfd=lfd)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "family": self.family.value,
            "K": self.k,
            "clamp": self.clamp,
            "atoms": self.atoms.tolist(),
            "Tstar": self.tstar.tolist(),
        }
        if self.lfd is not None:
            lfd = self.lfd
            out.update({
                "p0": lfd.p0.tolist(),
                "p1": lfd.p1.tolist(),
                "r": lfd.r.tolist(),
                "diagnostics": {
                    "objective": lfd.objective,
                    "entropy": list(lfd.entropy),
                    "budget": list(lfd.budget),
                    "iterations": lfd.iterations,
                    "gap": lfd.gap,
                    "converged": lfd.converged,
                },
            })
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorModel":
        return cls(np.array(data["atoms"], dtype=float), np.array(data["Tstar"], dtype=float),
                   data["family"], int(data["K"]), float(data.get("clamp", CLAMP)))

    def save(self, path, extra: dict | None = None) -> None:
        payload = self.to_dict()
        if extra:
            payload["config"] = extra
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DetectorModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Decision:
    score: float
    verdict: str

    @classmethod
    def of(cls, score: float) -> "Decision":
        return cls(float(score), H0 if score >= 0 else H1)


def _queries(model, omegas):
    q = omegas.points if isinstance(omegas, SampleSet) else np.asarray(omegas, dtype=float)
    if q.ndim == 1:
        q = q[:, None] if model.dim == 1 else q[None, :]
    q = np.ascontiguousarray(q, dtype=float)
    if q.shape[1] != model.dim:
        raise ValueError(f"expected points of dimension {model.dim}, got {q.shape[1]}")
    return q


def scores(model: DetectorModel, omegas) -> np.ndarray:
    """Detector values at many points (rows of ``omegas``)."""
    q = _queries(model, omegas)
    return kernels.knn_scores(q, model.atoms, model.tstar, model.k, ZERO_DISTANCE)


def score(model: DetectorModel, omega) -> float:
    """Inverse-distance weighted average of ``tstar`` over the K nearest atoms.

    A point within 1e-12 of an atom takes that atom's value.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.ndim != 1 or omega.shape[0] != model.dim:
        raise ValueError(f"expected a point of dimension {model.dim}")
    return float(scores(model, omega[None, :])[0])


def decide(model: DetectorModel, omega) -> Decision:
    return Decision.of(score(model, omega))


def decide_batch(model: DetectorModel, omegas) -> Decision:
    """Accept H0 when the mean score over the batch is nonnegative."""
    q = _queries(model, omegas)
    if q.shape[0] == 0:
        raise ValueError("empty batch")
    return Decision.of(float(np.mean(scores(model, q))))


def batch_errors(point_scores: np.ndarray, batches: np.ndarray, truth: str) -> float:
    """Misclassification rate of batched decisions given per-point scores."""
    means = np.mean(point_scores[batches], axis=1)
    wrong = means < 0 if truth == H0 else means >= 0
    return float(np.mean(wrong))


def make_batches(count: int, batch_size: int, n_batches: int | None = None, rng=None) -> np.ndarray:
    """Index batches: consecutive chunks, or ``n_batches`` random draws.

    Random batches sample without replacement inside each batch.
    """
    if batch_size < 1 or batch_size > count:
        raise ValueError("batch size must lie between 1 and the number of samples")
    if n_batches is None:
        usable = count // batch_size
        return np.arange(usable * batch_size).reshape(usable, batch_size)
    rng = make_rng(0 if rng is None else rng)
    return np.array([rng.choice(count, size=batch_size, replace=False) for _ in range(n_batches)])


def empirical_risk(model: DetectorModel, test0, test1, batch_size: int = 1,
                   n_batches: int | None = None, rng=None) -> float:
    """Mean of the H0-batch and H1-batch misclassification rates."""
    t0 = SampleSet.of(test0).points
    t1 = SampleSet.of(test1).points
    s0, s1 = scores(model, t0), scores(model, t1)
    rng = make_rng(0 if rng is None else rng)
    b0 = make_batches(len(t0), batch_size, n_batches, rng)
    b1 = make_batches(len(t1), batch_size, n_batches, rng)
    return 0.5 * (batch_errors(s0, b0, H0) + batch_errors(s1, b1, H1))
