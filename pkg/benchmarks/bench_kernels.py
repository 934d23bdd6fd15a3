"""Times the numpy kernels against the numba ones on training-shaped inputs.

Run:  python3 benchmarks/bench_kernels.py [repeats]

Both backends are imported directly, so the DFNET_BACKEND switch plays no
role here. The first numba call per kernel compiles; a warmup pass runs
every kernel once before timing, and the reported number is the best of
`repeats` calls.
"""

import sys
import time

import numpy as np

from dfnet.kernels import numba_backend as nb
from dfnet.kernels import numpy_backend as npk

REPEATS = int(sys.argv[1]) if len(sys.argv) > 1 else 5

rng = np.random.default_rng(0)


def best_of(fn, *args):
    times = []
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def case_conv(name, b, cin, cout, hw, dilation):
    x = rng.standard_normal((b, cin, hw, hw))
    w = rng.standard_normal((cout, cin, 3, 3))
    bias = rng.standard_normal(cout)
    gy = rng.standard_normal((b, cout, hw, hw))
    p = dilation
    return [
        (f"conv2d fwd {name}", (x, w, bias, dilation, p, 1), "conv2d_forward"),
        (f"conv2d g.in {name}", (w, gy, hw, hw, dilation, p, 1), "conv2d_grad_input"),
        (f"conv2d g.w {name}", (x, gy, 3, dilation, p, 1), "conv2d_grad_weights"),
    ]


def main():
    cases = []
    cases += case_conv("stem 4x3x96", 4, 3, 16, 96, 1)
    cases += case_conv("dense 4x80x12", 4, 80, 8, 12, 1)
    cases += case_conv("dilated 4x6x96", 4, 6, 6, 96, 2)

    x = rng.standard_normal((4, 32, 96, 96))
    gy = rng.standard_normal((4, 32, 48, 48))
    cases.append(("avg_pool fwd 4x32x96 k2s2", (x, 2, 0, 2), "avg_pool_forward"))
    cases.append(("avg_pool grad 4x32x96 k2s2", (gy, 96, 96, 2, 0, 2), "avg_pool_grad_input"))

    small = rng.standard_normal((4, 6, 12, 12))
    gup = rng.standard_normal((4, 6, 96, 96))
    cases.append(("bilinear fwd 12->96", (small, 96, 96), "bilinear_forward"))
    cases.append(("bilinear grad 96->12", (gup, 12, 12), "bilinear_grad_input"))

    print("warming up numba (compiles each kernel once)...")
    for _, args, fname in cases:
        getattr(nb, fname)(*args)

    header = f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'numba/numpy':>12}"
    print(header)
    print("-" * len(header))
    for label, args, fname in cases:
        t_np = best_of(getattr(npk, fname), *args)
        t_nb = best_of(getattr(nb, fname), *args)
        ratio = t_np / t_nb
        print(f"{label:<28} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {ratio:>11.2f}x")

    print(f"\nbest of {REPEATS}; ratio > 1 means numba is faster")


if __name__ == "__main__":
    main()
