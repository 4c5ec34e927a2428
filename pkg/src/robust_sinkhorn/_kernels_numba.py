"""numba-compiled versions of the hot kernels (see ``_kernels_numpy``)."""

import math

import numpy as np
from numba import njit

LOG2 = math.log(2.0)


@njit(cache=True)
def _pair_value(a, b, code):
    if a < 0.0:
        a = 0.0
    if b < 0.0:
        b = 0.0
    if code == 0:
        return 2.0 * math.sqrt(a * b)
    s = a + b
    if code == 1:
        v = 0.0
        if a > 0.0:
            v += a * math.log(s / a)
        if b > 0.0:
            v += b * math.log(s / b)
        return v / LOG2
    if code == 2:
        if s > 0.0:
            return 4.0 * a * b / s
        return 0.0
    return 2.0 * min(a, b)


@njit(cache=True)
def pair_values(a, b, code):
    out = np.empty(a.shape[0])
    for j in range(a.shape[0]):
        out[j] = _pair_value(a[j], b[j], code)
    return out


@njit(cache=True)
def pair_objective(a, b, code):
    acc = 0.0
    for j in range(a.shape[0]):
        acc += _pair_value(a[j], b[j], code)
    return acc


@njit(cache=True)
def segment_objective(a, da, b, db, gamma, code):
    acc = 0.0
    for j in range(a.shape[0]):
        acc += _pair_value(a[j] + gamma * da[j], b[j] + gamma * db[j], code)
    return acc


@njit(cache=True)
def pair_gradient(a, b, code, clamp):
    n = a.shape[0]
    g0 = np.empty(n)
    g1 = np.empty(n)
    for j in range(n):
        s = a[j] + b[j]
        r = a[j] / s if s > 0.0 else 0.5
        if r < clamp:
            r = clamp
        elif r > 1.0 - clamp:
            r = 1.0 - clamp
        if code == 0:
            g0[j] = math.sqrt((1.0 - r) / r)
            g1[j] = math.sqrt(r / (1.0 - r))
        elif code == 1:
            g0[j] = -math.log(r) / LOG2
            g1[j] = -math.log1p(-r) / LOG2
        elif code == 2:
            g0[j] = 4.0 * (1.0 - r) * (1.0 - r)
            g1[j] = 4.0 * r * r
        else:
            if r < 0.5:
                g0[j] = 2.0
            elif r > 0.5:
                g0[j] = 0.0
            else:
                g0[j] = 1.0
            g1[j] = 2.0 - g0[j]
    return g0, g1


@njit(cache=True)
def gibbs(logw, g, logc, theta):
    n, m = logw.shape
    p = np.empty((n, m))
    h = 0.0
    dh = 0.0
    for i in range(n):
        amax = -np.inf
        for j in range(m):
            v = logw[i, j] + theta * g[i, j]
            p[i, j] = v
            if v > amax:
                amax = v
        tot = 0.0
        for j in range(m):
            tot += math.exp(p[i, j] - amax)
        lse = amax + math.log(tot)
        c = math.exp(logc[i])
        pg = 0.0
        for j in range(m):
            p[i, j] = math.exp(p[i, j] - lse + logc[i])
            pg += p[i, j] * g[i, j]
        h += c * (logc[i] - lse) + theta * pg
        mu = pg / c
        var = 0.0
        for j in range(m):
            dv = g[i, j] - mu
            var += p[i, j] * dv * dv
        dh += theta * var
    return p, h, dh


@njit(cache=True)
def block_entropy(p, logw):
    acc = 0.0
    n, m = p.shape
    for i in range(n):
        for j in range(m):
            if p[i, j] > 0.0:
                acc += p[i, j] * (math.log(p[i, j]) - logw[i, j])
    return acc


@njit(cache=True)
def knn_scores(queries, atoms, values, k, zero_tol):
    q, d = queries.shape
    n = atoms.shape[0]
    out = np.empty(q)
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    for s in range(q):
        filled = 0
        for j in range(n):
            acc = 0.0
            for t in range(d):
                diff = queries[s, t] - atoms[j, t]
                acc += diff * diff
            dist = math.sqrt(acc)
            if filled < k:
                pos = filled
                filled += 1
            elif dist < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            # insertion keeps ties in index order
            while pos > 0 and best_d[pos - 1] > dist:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = dist
            best_i[pos] = j
        if best_d[0] < zero_tol:
            out[s] = values[best_i[0]]
            continue
        num = 0.0
        den = 0.0
        for t in range(k):
            w = 1.0 / best_d[t]
            num += w * values[best_i[t]]
            den += w
        out[s] = num / den
    return out
