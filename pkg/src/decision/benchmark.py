"""Benchmark the numba kernels against the pure-numpy fallback.

Run as ``python -m decision.benchmark``. Shapes mirror the real hot paths:
batch-sized matmuls, softmax rows, centroid accumulation over a full target
set, and the per-source distance matrix.
"""

import argparse
import time

import numpy as np

from . import kernels

CASES = [
    ("matmul_nn", lambda r: (r.standard_normal((32, 64)), r.standard_normal((64, 16)))),
    ("matmul_nt", lambda r: (r.standard_normal((32, 16)), r.standard_normal((64, 16)))),
    ("matmul_tn", lambda r: (r.standard_normal((32, 64)), r.standard_normal((32, 16)))),
    ("relu_fwd", lambda r: (r.standard_normal((32, 64)),)),
    ("relu_bwd", lambda r: (r.standard_normal((32, 64)), r.standard_normal((32, 64)))),
    ("softmax_rows", lambda r: (r.standard_normal((32, 10)),)),
    ("log_softmax_rows", lambda r: (r.standard_normal((32, 10)),)),
    ("weighted_feature_sums",
     lambda r: (r.standard_normal((960, 16)), r.dirichlet(np.ones(10), size=960))),
    ("per_source_sqdist",
     lambda r: (r.standard_normal((4, 960, 16)), r.standard_normal((4, 10, 16)),
                r.dirichlet(np.ones(4)))),
    ("pairwise_sqdist", lambda r: (r.standard_normal((960, 16)), r.standard_normal((10, 16)))),
]


def _time(fn, args, repeats):
    fn(*args)  # warmup / JIT
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(a - b)))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not kernels.NUMBA_AVAILABLE:
        print("numba not available; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<24}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>9}{'max|diff|':>12}")
    for name, make in CASES:
        call_args = make(rng)
        py, nb = kernels.NUMPY_KERNELS[name], kernels.NUMBA_KERNELS[name]
        t_py = _time(py, call_args, args.repeats)
        t_nb = _time(nb, call_args, args.repeats)
        diff = _max_diff(py(*call_args), nb(*call_args))
        print(f"{name:<24}{1e6 * t_py:>12.2f}{1e6 * t_nb:>12.2f}"
              f"{t_py / t_nb:>9.2f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
