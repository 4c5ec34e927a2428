"""Pure-numpy reference kernels.

Same signatures as ``_kernels_numba``; selected when numba is missing or
disabled through ``ROBUST_SINKHORN_DISABLE_NUMBA``.
"""

import numpy as np

LOG2 = np.log(2.0)


def pair_values(a, b, code):
    """Per-atom ``(a + b) * psi(a / (a + b))`` in homogeneous closed form."""
    a = np.maximum(a, 0.0)
    b = np.maximum(b, 0.0)
    s = a + b
    if code == 0:
        return 2.0 * np.sqrt(a * b)
    if code == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = np.where(a > 0, a * np.log(s / np.where(a > 0, a, 1.0)), 0.0)
            tb = np.where(b > 0, b * np.log(s / np.where(b > 0, b, 1.0)), 0.0)
        return (ta + tb) / LOG2
    if code == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s > 0, 4.0 * a * b / np.where(s > 0, s, 1.0), 0.0)
    return 2.0 * np.minimum(a, b)


def pair_objective(a, b, code):
    return float(np.sum(pair_values(a, b, code)))


def segment_objective(a, da, b, db, gamma, code):
    return pair_objective(a + gamma * da, b + gamma * db, code)


def pair_gradient(a, b, code, clamp):
    """Partials of the pair objective w.r.t. ``a`` and ``b`` (clamped ratio)."""
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(s > 0, a / np.where(s > 0, s, 1.0), 0.5)
    r = np.clip(r, clamp, 1.0 - clamp)
    if code == 0:
        return np.sqrt((1.0 - r) / r), np.sqrt(r / (1.0 - r))
    if code == 1:
        return -np.log(r) / LOG2, -np.log1p(-r) / LOG2
    if code == 2:
        return 4.0 * (1.0 - r) ** 2, 4.0 * r * r
    g0 = np.where(r < 0.5, 2.0, np.where(r > 0.5, 0.0, 1.0))
    return g0, 2.0 - g0


def gibbs(logw, g, logc, theta):
    """Blockwise Gibbs reweighting ``p_ij = c_i softmax_j(log w_ij + theta g_ij)``.

    Returns ``(p, H, dH/dtheta)`` where ``H = sum p log(p / w)``.
    """
    a = logw + theta * g
    amax = np.max(a, axis=1, keepdims=True)
    lse = amax[:, 0] + np.log(np.sum(np.exp(a - amax), axis=1))
    p = np.exp(a - lse[:, None] + logc[:, None])
    c = np.exp(logc)
    pg = np.sum(p * g, axis=1)
    h = float(np.sum(c * (logc - lse)) + theta * np.sum(pg))
    mu = pg / c
    var = np.sum(p * (g - mu[:, None]) ** 2, axis=1)
    return p, h, float(theta * np.sum(var))


def block_entropy(p, logw):
    """``sum p log(p / w)`` with ``0 log 0 = 0``."""
    pos = p > 0
    return float(np.sum(p[pos] * (np.log(p[pos]) - logw[pos])))


def knn_scores(queries, atoms, values, k, zero_tol):
    """Inverse-distance weighted mean of ``values`` over the k nearest atoms."""
    q, d = queries.shape
    n = atoms.shape[0]
    out = np.empty(q)
    chunk = max(1, int(4_000_000 // max(1, n * d)))
    for start in range(0, q, chunk):
        block = queries[start:start + chunk]
        diff = block[:, None, :] - atoms[None, :, :]
        dist = np.sqrt(np.einsum("qnd,qnd->qn", diff, diff))
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        near = np.take_along_axis(dist, order, axis=1)
        vals = values[order]
        exact = near[:, 0] < zero_tol
        inv = 1.0 / np.where(exact[:, None], 1.0, near)
        res = np.sum(inv * vals, axis=1) / np.sum(inv, axis=1)
        res[exact] = vals[exact, 0]
        out[start:start + chunk] = res
    return out
