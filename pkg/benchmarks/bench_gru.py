#!/usr/bin/env python3
"""Benchmark the recurrent-sequence kernels: numba JIT vs pure numpy.

Usage:
    python benchmarks/bench_gru.py [--repeats 20]

Times the forward and backward GRU sequence kernels on shapes
representative of training batches.  The first jitted call includes
compilation and is excluded via a warmup pass.
"""

import argparse
import time

import numpy as np

from acorm import backend, kernels


def bench(fn, repeats):
    fn()  # warmup (and JIT compile)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    shapes = [
        ("rollout step", 1, 6, 128),
        ("easy batch", 20, 96, 128),
        ("default batch", 40, 192, 128),
        ("state encoder", 40, 32, 64),
    ]
    print(f"{'case':>16} {'T':>4} {'B':>4} {'H':>4} {'numpy ms':>10} "
          f"{'numba ms':>10} {'speedup':>8}")
    for name, T, B, H in shapes:
        rng = np.random.default_rng(0)
        gi = rng.normal(size=(T, B, 3 * H))
        h0 = rng.normal(size=(B, H))
        whh = rng.normal(size=(3 * H, H)) * 0.3
        bhh = rng.normal(size=(3 * H,))
        whh_t = np.ascontiguousarray(whh.T)
        h, r, z, n, ghn = kernels.gru_seq_forward_numpy(gi, h0, whh_t, bhh)
        dh = rng.normal(size=(T, B, H))

        def run_numpy():
            out = kernels.gru_seq_forward_numpy(gi, h0, whh_t, bhh)
            kernels.gru_seq_backward_numpy(dh, *out, h0, whh)

        t_np = bench(run_numpy, args.repeats)
        if backend.HAS_NUMBA:
            backend.set_backend("numba")

            def run_numba():
                out = kernels.gru_seq_forward(gi, h0, whh_t, bhh)
                kernels.gru_seq_backward(dh, *out, h0, whh)

            t_nb = bench(run_numba, args.repeats)
            backend.set_backend("auto")
            print(f"{name:>16} {T:>4} {B:>4} {H:>4} {t_np*1e3:>10.2f} "
                  f"{t_nb*1e3:>10.2f} {t_np/t_nb:>7.2f}x")
        else:
            print(f"{name:>16} {T:>4} {B:>4} {H:>4} {t_np*1e3:>10.2f} "
                  f"{'n/a':>10} {'n/a':>8}")


if __name__ == "__main__":
    main()
