"""Timing comparison of the compiled and numpy kernel backends.

Run:  python3 benchmarks/bench_kernels.py [--sizes 64x65,128x129,256x257]
"""

import argparse
import time

import numpy as np

from bsnq.kernels import reference

try:
    from bsnq.kernels import _accel
except ImportError:
    _accel = None


def _time(fn, *args, repeat=7):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_size(nbatch, n):
    rng = np.random.default_rng(0)
    dl = rng.standard_normal((nbatch, n))
    d = rng.standard_normal((nbatch, n)) + 8.0
    du = rng.standard_normal((nbatch, n))
    b = rng.standard_normal((nbatch, n))
    f = rng.standard_normal((nbatch, n))
    dz = 0.01
    out = np.empty_like(b)
    work = np.empty_like(b)

    rows = []
    cases = [
        ("thomas", lambda m: m.thomas_batch(dl, d, du, b, work, out)),
        ("ddz", lambda m: m.ddz_apply(f, dz, out)),
        ("d2z", lambda m: m.d2z_apply(f, dz, out)),
    ]
    for name, call in cases:
        t_np = _time(call, reference)
        t_cy = _time(call, _accel) if _accel is not None else np.nan
        rows.append((name, t_np, t_cy))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="64x65,128x129,256x257,512x513")
    args = ap.parse_args()

    print("%-10s %-10s %12s %12s %8s" % ("size", "kernel", "numpy [us]", "cython [us]", "speedup"))
    for token in args.sizes.split(","):
        nb, n = (int(v) for v in token.split("x"))
        for name, t_np, t_cy in bench_size(nb, n):
            sp = t_np / t_cy if np.isfinite(t_cy) and t_cy > 0 else np.nan
            print("%-10s %-10s %12.2f %12.2f %8.2f"
                  % (token, name, 1e6 * t_np, 1e6 * t_cy, sp))


if __name__ == "__main__":
    main()
