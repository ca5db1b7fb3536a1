"""Hot inner loops with a numba backend and a pure-numpy fallback.

The numba backend is used when numba imports cleanly and the environment
variable ``G2PFREE_NO_NUMBA`` is unset (or ``0``). Both backends return
bit-identical results; the fallback exists for platforms without numba and
for cross-checking.
"""

from __future__ import annotations

import os

from . import _numpy as numpy_backend


def _numba_wanted() -> bool:
    return os.environ.get("G2PFREE_NO_NUMBA", "").strip().lower() in ("", "0", "false", "no")


numba_backend = None
if _numba_wanted():
    try:
        from . import _numba as numba_backend
    except ImportError:  # pragma: no cover - numba missing
        numba_backend = None

backend = numba_backend if numba_backend is not None else numpy_backend
BACKEND_NAME = "numba" if backend is numba_backend else "numpy"

nearest_centroid = backend.nearest_centroid
cluster_sums = backend.cluster_sums
sequential_sum = backend.sequential_sum
levenshtein = backend.levenshtein

__all__ = [
    "BACKEND_NAME",
    "backend",
    "numpy_backend",
    "numba_backend",
    "nearest_centroid",
    "cluster_sums",
    "sequential_sum",
    "levenshtein",
]
