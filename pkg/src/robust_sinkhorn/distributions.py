"""Sample containers, Gaussian kernel clouds, importance ratios and data I/O.

The transport cost is ``0.5 * ||x - y||^2`` with Lebesgue reference measure,
so the kernel distribution attached to a sample ``x`` at regularization
``epsilon`` is ``N(x, epsilon * I)``.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049


class DataError(Exception):
    """Base class for ingestion failures; ``code`` identifies the failure."""

    code = "data-error"


class DataReadError(DataError):
    code = "unreadable"


class DataFormatError(DataError):
    code = "bad-format"


class RowLengthError(DataError):
    code = "ragged-rows"


def _as_points(points) -> np.ndarray:
    if isinstance(points, SampleSet):
        return points.points
    a = np.asarray(points, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


@dataclass(frozen=True)
class SampleSet:
    """Ordered collection of points in R^d, stored as an ``(n, d)`` array."""

    points: np.ndarray

    def __post_init__(self):
        a = np.array(self.points, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise ValueError("SampleSet needs a nonempty (n, d) array")
        a.setflags(write=False)
        object.__setattr__(self, "points", a)

    @classmethod
    def of(cls, points) -> "SampleSet":
        return points if isinstance(points, cls) else cls(points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, idx):
        return self.points[idx]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.points[np.asarray(idx)])


@dataclass(frozen=True)
class DiscreteDistribution:
    atoms: np.ndarray
    masses: np.ndarray
    total_mass: float = field(default=float("nan"))

    def __post_init__(self):
        atoms = _as_points(self.atoms).copy()
        masses = np.array(self.masses, dtype=float).reshape(-1)
        if atoms.shape[0] != masses.shape[0]:
            raise ValueError("atoms and masses differ in length")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        total = float(np.sum(masses))
        if not np.isnan(self.total_mass) and not np.isclose(
            self.total_mass, total, rtol=1e-12, atol=0.0
        ):
            raise ValueError("stored total mass disagrees with the masses")
        atoms.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "total_mass", total)

    @classmethod
    def empirical(cls, points) -> "DiscreteDistribution":
        pts = _as_points(points)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    def mean(self) -> np.ndarray:
        return self.masses @ self.atoms / self.total_mass

    def std(self) -> float:
        """Mass-weighted root mean squared distance to the mean."""
        dev = self.atoms - self.mean()
        return float(np.sqrt(self.masses @ np.sum(dev * dev, axis=1) / self.total_mass))


def make_rng(seed, *keys) -> np.random.Generator:
    """PCG64 generator seeded from ``seed`` and optional integer sub-keys.

    Sub-keys give independent, reproducible streams for trials, grid cells
    and candidate times without sharing state.
    """
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("sub-keys need an integer seed")
        return seed
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class KernelCloud:
    center: np.ndarray
    bandwidth: float
    draws: SampleSet

    @property
    def m(self) -> int:
        return len(self.draws)


def gaussian_kernel_sample(center, epsilon: float, m: int, rng) -> KernelCloud:
    """Draw ``m`` points from ``N(center, epsilon * I)``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    rng = make_rng(rng)
    g = rng.standard_normal((int(m), center.shape[0]))
    draws = center + np.sqrt(epsilon) * g
    return KernelCloud(center.copy(), float(epsilon), SampleSet(draws))


def _log_odds(z, x0, x1, epsilon):
    z = np.asarray(z, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if not (z.shape[-1] == x0.shape[-1] == x1.shape[-1]):
        raise ValueError("dimension mismatch")
    d0 = np.sum((z - x0) ** 2, axis=-1)
    d1 = np.sum((z - x1) ** 2, axis=-1)
    return (d1 - d0) / (2.0 * epsilon)


def ratios_from_log_odds(delta):
    """``(r0, r1)`` with ``r0 = 2 sigmoid(delta)`` and ``r0 + r1 == 2``.

    The smaller ratio is evaluated directly so that it keeps full relative
    precision; the larger one is its complement.
    """
    delta = np.asarray(delta, dtype=float)
    e = np.exp(-np.abs(delta))
    small = 2.0 * e / (1.0 + e)
    big = 2.0 - small
    r0 = np.where(delta >= 0, big, small)
    r1 = np.where(delta >= 0, small, big)
    return r0, r1


def importance_ratio(z, x0, x1, epsilon: float):
    """Weighted importance ratios of the two kernels at ``z``.

    Returns ``(r0, r1)`` with ``rk = 2 q_k / (q_0 + q_1)`` where ``q_k`` is the
    density of ``N(x_k, epsilon I)``.  ``z`` may be a single point or an
    ``(n, d)`` array.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    r0, r1 = ratios_from_log_odds(_log_odds(np.atleast_1d(z)[None, :] if single else z, x0, x1, epsilon))
    if single:
        return float(r0[0]), float(r1[0])
    return r0, r1


def log_importance_ratios(z, x0, x1, epsilon: float):
    """``(log r0, log r1)`` without underflow for far-apart kernels."""
    delta = _log_odds(z, x0, x1, epsilon)
    # log(2 sigmoid(d)) = log 2 - log1p(exp(-d))
    lr0 = np.log(2.0) - np.logaddexp(0.0, -delta)
    lr1 = np.log(2.0) - np.logaddexp(0.0, delta)
    return lr0, lr1


def mixture_support(cloud0: KernelCloud, cloud1: KernelCloud) -> SampleSet:
    """Atoms of the equal-weight mixture of two kernel clouds, duplicates kept.

    Each of the ``2m`` atoms carries weight ``1/(2m)``.
    """
    if cloud0.m != cloud1.m:
        raise ValueError("clouds must hold the same number of draws")
    if cloud0.draws.dim != cloud1.draws.dim:
        raise ValueError("dimension mismatch")
    if cloud0.bandwidth != cloud1.bandwidth:
        raise ValueError("clouds must share the bandwidth")
    return SampleSet(np.concatenate([cloud0.draws.points, cloud1.draws.points]))


def rho_bar_offset(epsilon: float, dim: int) -> float:
    """``epsilon * log int exp(-||x - z||^2 / (2 epsilon)) dz`` for Lebesgue nu.

    The regularized radius is ``rho_bar = rho + rho_bar_offset(epsilon, d)``.
    """
    return float(epsilon * 0.5 * dim * np.log(2.0 * np.pi * epsilon))


# ---------------------------------------------------------------- data files


def _open(path):
    path = Path(path)
    try:
        if path.suffix == ".gz":
            return gzip.open(path, "rb")
        return open(path, "rb")
    except OSError as exc:
        raise DataReadError(f"cannot open {path}: {exc}") from exc


def load_csv(path) -> SampleSet:
    """Headerless comma-separated rows of reals, one point per row."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataReadError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
        if len(rows[-1]) != len(rows[0]):
            raise RowLengthError(
                f"{path}:{lineno}: expected {len(rows[0])} values, got {len(rows[-1])}"
            )
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return SampleSet(np.array(rows))


def save_csv(path, points) -> None:
    pts = _as_points(points)
    lines = [",".join(repr(float(v)) for v in row) for row in pts]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open(path) as fh:
        try:
            raw = fh.read()
        except (OSError, EOFError) as exc:
            raise DataReadError(f"cannot read {path}: {exc}") from exc
    header = 4 * (1 + ndim)
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise DataFormatError(f"{path}: magic number {got}, expected {magic}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    data = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if data.size != count:
        raise DataFormatError(f"{path}: expected {count} data bytes, found {data.size}")
    return data.reshape(dims)


def load_idx(images_path, labels_path, digits: Iterable[int] | None = None) -> dict:
    """Read an MNIST image/label IDX pair (optionally gzipped).

    Returns ``{digit: SampleSet}`` with images flattened row-major and pixels
    scaled to ``[0, 1]``.  ``digits`` restricts the labels returned.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError("image and label counts differ")
    flat = images.reshape(images.shape[0], -1).astype(float) / 255.0
    wanted = sorted(set(int(d) for d in digits)) if digits is not None else np.unique(labels)
    out = {}
    for digit in wanted:
        rows = flat[labels == digit]
        if rows.shape[0]:
            out[int(digit)] = SampleSet(rows)
    return out


def write_idx(images_path, labels_path, images: np.ndarray, labels: Sequence[int]) -> None:
    """Write uint8 images ``(count, rows, cols)`` and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    lab = struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes()
    for path, payload in ((images_path, img), (labels_path, lab)):
        path = Path(path)
        if path.suffix == ".gz":
            with gzip.GzipFile(path, "wb", mtime=0) as fh:
                fh.write(payload)
        else:
            path.write_bytes(payload)
