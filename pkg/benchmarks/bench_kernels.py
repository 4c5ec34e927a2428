"""Compare the numba and pure-numpy kernel backends.

Kernel timings call both backend modules directly on the same inputs.  The
end-to-end timing solves one LFD problem and scores a test set in two fresh
interpreters, one with ``ROBUST_SINKHORN_DISABLE_NUMBA=1``.

    python3 benchmarks/bench_kernels.py [--atoms 4000] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from robust_sinkhorn import kernels
from robust_sinkhorn.distributions import make_rng

END_TO_END = """
import time, numpy as np
from robust_sinkhorn import kernels
from robust_sinkhorn.detector import DetectorModel, scores
from robust_sinkhorn.distributions import make_rng
from robust_sinkhorn.lfd import fit_lfd
rng = make_rng(0)
s0, s1 = rng.standard_normal((20, 2)), rng.standard_normal((20, 2)) + 1.0
fit_lfd(s0[:2], s1[:2], 0.5, 0.03, "quad", 5, 0)  # warm-up (jit compile / cache load)
t = time.perf_counter()
lfd = fit_lfd(s0, s1, 0.5, 0.03, "quad", 50, 0)
t_fit = time.perf_counter() - t
q = rng.standard_normal((2000, 2))
t = time.perf_counter()
scores(DetectorModel.from_lfd(lfd), q)
t_score = time.perf_counter() - t
print(kernels.BACKEND, lfd.iterations, t_fit, t_score)
"""


def time_call(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(n_atoms, repeat):
    if kernels.numba_backend is None:
        print("numba is not installed; nothing to compare")
        return
    rng = make_rng(1)
    blocks = max(1, n_atoms // 100)
    a = rng.random(n_atoms)
    b = rng.random(n_atoms)
    a /= a.sum()
    b /= b.sum()
    logw = np.log(rng.random((blocks, 100)))
    g = rng.standard_normal((blocks, 100))
    logc = np.log(np.exp(logw).sum(axis=1))
    atoms = rng.standard_normal((n_atoms, 2))
    vals = rng.standard_normal(n_atoms)
    queries = rng.standard_normal((500, 2))

    cases = {
        "pair_objective": lambda m: m.pair_objective(a, b, 2),
        "pair_gradient": lambda m: m.pair_gradient(a, b, 2, 1e-9),
        "segment_objective": lambda m: m.segment_objective(a, b - a, b, a - b, 0.3, 0),
        "gibbs": lambda m: m.gibbs(logw, g, logc, 1.7),
        "block_entropy": lambda m: m.block_entropy(np.exp(logw), logw),
        "knn_scores(500 q)": lambda m: m.knn_scores(queries, atoms, vals, 5, 1e-12),
    }
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in cases.items():
        t_np = time_call(lambda: call(kernels.numpy_backend), repeat) * 1e3
        t_nb = time_call(lambda: call(kernels.numba_backend), repeat) * 1e3
        print(f"{name:<20}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.1f}")


def end_to_end():
    print()
    print(f"{'backend':<10}{'FW iters':>10}{'fit [s]':>10}{'score [s]':>11}")
    for flag in ("1", "0"):
        env = {**os.environ, "ROBUST_SINKHORN_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"{out[0]:<10}{out[1]:>10}{float(out[2]):>10.3f}{float(out[3]):>11.3f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--atoms", type=int, default=4000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    kernel_table(args.atoms, args.repeat)
    end_to_end()


if __name__ == "__main__":
    main()
