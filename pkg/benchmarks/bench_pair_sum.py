"""Time the compiled pair-sum kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_pair_sum.py``. Each row reports the best of
``--repeat`` runs and the relative difference between the two results.
"""

import argparse
import math
import timeit

import numpy as np

from heatbv import _kernels_py

try:
    from heatbv import _kernels
except ImportError:
    _kernels = None


def offset_case(n, p, periodic):
    x = (np.arange(n) + 0.5) / n
    f = np.sin(2 * math.pi * x)
    t, h = 1e-3, 1.0 / n
    m = np.arange(n // 2 + 1) * h
    k = (4 * math.pi * t) ** -0.5 * np.exp(-m * m / (4 * t))
    return "offset", (f, f, k, periodic, p, 0)


def dense_case(n, p):
    x = (np.arange(n) + 0.5) / n
    f = np.sin(2 * math.pi * x)
    d = np.abs(x[:, None] - x[None, :])
    d = np.minimum(d, 1 - d)
    K = np.ascontiguousarray(np.exp(-d * d / 4e-3))
    return "dense", (K, 0, f, f, np.full(n, 1.0 / n), p, 0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = [offset_case(n, p, True) for n in (1024, 4096, 16384) for p in (1.0, 2.0, 1.5)]
    cases += [offset_case(4096, 2.0, False)]
    cases += [dense_case(n, p) for n in (256, 1024) for p in (2.0, 3.0)]
    print(f"{'kernel':8s} {'N':>6s} {'p':>4s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'rel diff':>9s}")
    for kind, fargs in cases:
        n = fargs[0].shape[0] if kind == "offset" else fargs[2].shape[0]
        p = fargs[4] if kind == "offset" else fargs[5]
        name = "offset_pair_sum" if kind == "offset" else "dense_pair_sum"
        py_fn = getattr(_kernels_py, name)
        py_t = min(timeit.repeat(lambda: py_fn(*fargs), number=1, repeat=args.repeat))
        ref = py_fn(*fargs)
        if _kernels is None:
            print(f"{kind:8s} {n:6d} {p:4g} {py_t * 1e3:10.2f} {'n/a':>10s} {'n/a':>8s} {'n/a':>9s}")
            continue
        cy_fn = getattr(_kernels, name)
        cy_t = min(timeit.repeat(lambda: cy_fn(*fargs), number=1, repeat=args.repeat))
        diff = abs(cy_fn(*fargs) - ref) / abs(ref)
        print(f"{kind:8s} {n:6d} {p:4g} {py_t * 1e3:10.2f} {cy_t * 1e3:10.2f} {py_t / cy_t:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
