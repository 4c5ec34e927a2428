"""Generating functions, their pointwise-optimal risk and detector values.

Each family supplies a convex surrogate ``ell`` for the 0/1 loss, the
minimized pointwise risk ``psi(r) = min_T r*ell(-T) + (1-r)*ell(T)`` and the
minimizer ``tstar(r)``.  ``r`` is the posterior weight of H0, i.e.
``dP0 / d(P0 + P1)``; ``tstar`` is positive when H0 is more likely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import entr, logit

LOG2 = np.log(2.0)

#: default clamp for ratios fed to ``tstar`` and ``psi_prime``
CLAMP = 1e-9


class Family(str, enum.Enum):
    EXPONENTIAL = "exp"
    LOGISTIC = "logistic"
    QUADRATIC_HINGE = "quad"
    HINGE = "hinge"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, value: "Family | str") -> "Family":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {value!r}; choose one of {names}") from None


_CODES = {
    Family.EXPONENTIAL: 0,
    Family.LOGISTIC: 1,
    Family.QUADRATIC_HINGE: 2,
    Family.HINGE: 3,
}


def _check_unit(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r >= 0.0) | ~(r <= 1.0)):
        raise ValueError("ratio r must lie in [0, 1]")
    return r


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def ell(family, t):
    """Generating function ``ell(t)``; equals 1 at 0 and vanishes at -inf."""
    family = Family.parse(family)
    t = np.asarray(t, dtype=float)
    if family is Family.EXPONENTIAL:
        with np.errstate(over="ignore"):
            v = np.exp(t)
    elif family is Family.LOGISTIC:
        v = (np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))) / LOG2
    elif family is Family.QUADRATIC_HINGE:
        v = np.maximum(t + 1.0, 0.0) ** 2
    else:
        v = np.maximum(t + 1.0, 0.0)
    return _out(v, t)


def psi(family, r):
    """Minimized pointwise risk on ``[0, 1]`` (``0 log 0 := 0`` at the ends)."""
    family = Family.parse(family)
    r = _check_unit(r)
    if family is Family.EXPONENTIAL:
        v = 2.0 * np.sqrt(r * (1.0 - r))
    elif family is Family.LOGISTIC:
        v = (entr(r) + entr(1.0 - r)) / LOG2
    elif family is Family.QUADRATIC_HINGE:
        v = 4.0 * r * (1.0 - r)
    else:
        v = 2.0 * np.minimum(r, 1.0 - r)
    return _out(v, r)


def psi_prime(family, r, clamp: float = CLAMP):
    """Derivative of ``psi``; ``r`` is clamped to ``[clamp, 1 - clamp]`` first.

    For the hinge family the subgradient 0 is returned at ``r = 1/2``.
    """
    family = Family.parse(family)
    r = np.clip(_check_unit(r), clamp, 1.0 - clamp)
    if family is Family.EXPONENTIAL:
        v = (1.0 - 2.0 * r) / np.sqrt(r * (1.0 - r))
    elif family is Family.LOGISTIC:
        v = (np.log1p(-r) - np.log(r)) / LOG2
    elif family is Family.QUADRATIC_HINGE:
        v = 4.0 * (1.0 - 2.0 * r)
    else:
        v = 2.0 * np.sign(1.0 - 2.0 * r)
    return _out(v, r)


def tstar(family, r):
    """Pointwise risk minimizer, oriented so that ``r > 1/2`` gives ``T > 0``.

    The log families diverge at ``r in {0, 1}``; clamp ``r`` before calling.
    """
    family = Family.parse(family)
    r = _check_unit(r)
    with np.errstate(divide="ignore"):
        if family is Family.EXPONENTIAL:
            v = 0.5 * logit(r)
        elif family is Family.LOGISTIC:
            v = logit(r)
        elif family is Family.QUADRATIC_HINGE:
            v = 2.0 * r - 1.0
        else:
            v = np.sign(2.0 * r - 1.0)
    return _out(v, r)


def pointwise_risk(family, r, t):
    """``r * ell(-t) + (1 - r) * ell(t)``, broadcasting ``r`` against ``t``."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    return r * ell(family, -t) + (1.0 - r) * ell(family, t)


def clamp_ratio(r, clamp: float = CLAMP):
    return np.clip(np.asarray(r, dtype=float), clamp, 1.0 - clamp)


@dataclass(frozen=True)
class RiskSurrogate:
    family: Family
    value: float


def surrogate_risk(family, t0, mass0, t1, mass1) -> RiskSurrogate:
    """Surrogate risk ``E_P0[ell(-T)] + E_P1[ell(T)]`` of a detector.

    ``t0``/``mass0`` are the detector values and masses on the atoms of P0,
    likewise for P1.
    """
    family = Family.parse(family)
    mass0 = np.asarray(mass0, dtype=float)
    mass1 = np.asarray(mass1, dtype=float)
    if np.any(mass0 < 0) or np.any(mass1 < 0):
        raise ValueError("masses must be nonnegative")
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    # zero-mass atoms contribute nothing even where ell overflows
    v0 = np.where(mass0 > 0, mass0 * ell(family, -t0), 0.0)
    v1 = np.where(mass1 > 0, mass1 * ell(family, t1), 0.0)
    return RiskSurrogate(family, float(np.sum(v0) + np.sum(v1)))


def posterior_ratio(p0, p1):
    """Per-atom ``p0 / (p0 + p1)``; atoms without mass get 1/2."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    tot = p0 + p1
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(tot > 0, p0 / tot, 0.5)
    return r


__all__ = [
    "CLAMP",
    "Family",
    "RiskSurrogate",
    "clamp_ratio",
    "ell",
    "pointwise_risk",
    "posterior_ratio",
    "psi",
    "psi_prime",
    "surrogate_risk",
    "tstar",
]
