"""Compare the numba and pure-numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the G2PFREE_NO_NUMBA flag does not
matter here. Each kernel is warmed up once (numba compiles on first call),
checked for identical output, then timed with timeit (best of N).
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from g2pfree._kernels import _numpy as np_backend

try:
    from g2pfree._kernels import _numba as nb_backend
except ImportError:  # pragma: no cover
    nb_backend = None


def _cases(gen: np.random.Generator):
    data = gen.normal(size=(20_000, 39)).astype(np.float32)
    cents = gen.normal(size=(100, 39)).astype(np.float32)
    labels = gen.integers(0, 100, size=len(data)).astype(np.int64)
    seqs = [gen.integers(0, 100, size=n).astype(np.int64) for n in gen.integers(20, 200, size=200)]
    pairs = list(zip(seqs[::2], seqs[1::2]))
    return {
        "nearest_centroid 20000x39, k=100": lambda b: b.nearest_centroid(data, cents),
        "cluster_sums 20000x39, k=100": lambda b: b.cluster_sums(data, labels, 100),
        "levenshtein 100 pairs, len 20-200": lambda b: [b.levenshtein(x, y) for x, y in pairs],
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("numpy", np_backend)] + ([("numba", nb_backend)] if nb_backend else [])
    print(f"{'kernel':38s}" + "".join(f"{name:>12s}" for name, _ in backends) + "   speedup  identical")
    for label, fn in _cases(np.random.default_rng(0)).items():
        outs = [fn(b) for _, b in backends]  # warm-up and correctness
        times = [min(timeit.repeat(lambda b=b: fn(b), number=1, repeat=args.repeat)) for _, b in backends]
        row = f"{label:38s}" + "".join(f"{1e3 * t:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:7.1f}x  {_same(outs[0], outs[1])}"
        print(row)


if __name__ == "__main__":
    main()
