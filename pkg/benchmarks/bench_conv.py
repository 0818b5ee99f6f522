"""Compare the compiled convolution kernels against the numpy fallback.

Runs the shapes that dominate training at each scale divisor and prints a
table of per-call times plus the speedup.  Usage:

    python benchmarks/bench_conv.py [--repeat N]
"""

import argparse
import time

import numpy as np

from hairgan.autodiff import kernels as K

CASES = [
    ("conv2d 128^2x4->16 s2 (pnet in, k=8)", "2d", (128, 4, 16, 2)),
    ("conv2d 64^2x16->16 s1", "2d", (64, 16, 16, 1)),
    ("conv2d 256^2x4->8 s2 (k=4)", "2d", (256, 4, 8, 2)),
    ("conv2d 16^2x16->12 s1 (head out, k=8)", "2d", (16, 16, 12, 1)),
    ("conv3d 16x16x12x4->2 s2 (disc in, k=8)", "3d", (16, 4, 2, 2)),
    ("conv3d 32x32x24x4->8 s2 (k=4)", "3d", (32, 4, 8, 2)),
    ("conv3d 16x16x12x3->3 s1 (gen tail, k=8)", "3d", (16, 3, 3, 1)),
]


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def variants(kind, n, cin, cout, s, rng):
    if kind == "2d":
        x = rng.random((n, n, cin))
        w = rng.random((5, 5, cin, cout))
        y = K._np_conv2d_fwd(x, w, s)
        yield "fwd", lambda: K._np_conv2d_fwd(x, w, s), \
            lambda: K._ext.conv2d_fwd(x, w, s)
        yield "dgrad", lambda: K._np_conv2d_dgrad(y, w, s, x.shape), \
            lambda: K._ext.conv2d_dgrad(y, w, s, n, n)
        yield "wgrad", lambda: K._np_conv2d_wgrad(x, y, s, w.shape), \
            lambda: K._ext.conv2d_wgrad(x, y, s, 5, 5)
    else:
        d3 = n * 3 // 4
        x = rng.random((n, n, d3, cin))
        w = rng.random((3, 3, 3, cin, cout))
        y = K._np_conv3d_fwd(x, w, s)
        yield "fwd", lambda: K._np_conv3d_fwd(x, w, s), \
            lambda: K._ext.conv3d_fwd(x, w, s)
        yield "dgrad", lambda: K._np_conv3d_dgrad(y, w, s, x.shape), \
            lambda: K._ext.conv3d_dgrad(y, w, s, n, n, d3)
        yield "wgrad", lambda: K._np_conv3d_wgrad(x, y, s, w.shape), \
            lambda: K._ext.conv3d_wgrad(x, y, s, 3, 3, 3)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    rng = np.random.default_rng(0)

    if K._ext is None:
        print("compiled extension not built; numpy fallback only")
    print(f"{'case':46s} {'numpy':>11s} {'compiled':>11s} {'speedup':>8s}")
    for name, kind, (n, cin, cout, s) in CASES:
        for vname, np_fn, cy_fn in variants(kind, n, cin, cout, s, rng):
            tn = best_of(np_fn, opts.repeat)
            if K._ext is not None:
                tc = best_of(cy_fn, opts.repeat)
                print(f"{name + ' ' + vname:46s} {tn * 1e3:10.3f}ms "
                      f"{tc * 1e3:10.3f}ms {tn / tc:7.2f}x")
            else:
                print(f"{name + ' ' + vname:46s} {tn * 1e3:10.3f}ms "
                      f"{'-':>11s} {'-':>8s}")


if __name__ == "__main__":
    main()
