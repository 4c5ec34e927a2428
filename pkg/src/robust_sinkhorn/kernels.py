"""Backend selection for the hot numeric kernels.

numba is used when importable unless ``ROBUST_SINKHORN_DISABLE_NUMBA`` is set
to a non-empty value other than ``0``.  Both backends stay importable as
``kernels.numpy_backend`` / ``kernels.numba_backend`` for cross-checking.
"""

import os

from . import _kernels_numpy as numpy_backend

_disabled = os.environ.get("ROBUST_SINKHORN_DISABLE_NUMBA", "").strip() not in ("", "0")

try:
    from . import _kernels_numba as numba_backend
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_backend = None

USE_NUMBA = numba_backend is not None and not _disabled
BACKEND = "numba" if USE_NUMBA else "numpy"
_impl = numba_backend if USE_NUMBA else numpy_backend

pair_values = _impl.pair_values
pair_objective = _impl.pair_objective
segment_objective = _impl.segment_objective
pair_gradient = _impl.pair_gradient
gibbs = _impl.gibbs
block_entropy = _impl.block_entropy
knn_scores = _impl.knn_scores

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "block_entropy",
    "gibbs",
    "knn_scores",
    "numba_backend",
    "numpy_backend",
    "pair_gradient",
    "pair_objective",
    "pair_values",
    "segment_objective",
]
