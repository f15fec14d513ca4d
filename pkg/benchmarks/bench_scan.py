"""Benchmark the selective-scan kernels: compiled extension vs pure numpy.

Usage: python benchmarks/bench_scan.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from specrecon import _scan_np

try:
    from specrecon import _scan_cy
except ImportError:
    _scan_cy = None


def make_inputs(rng, B, T, D, N, dtype=np.float32):
    x = rng.standard_normal((B, T, D)).astype(dtype)
    abar = rng.uniform(0.5, 0.99, size=(B, T, D, N)).astype(dtype)
    bbar = rng.uniform(0.01, 0.5, size=(B, T, D, N)).astype(dtype)
    c = rng.standard_normal((B, T, N)).astype(dtype)
    mask = (rng.uniform(size=(B, T, D)) > 0.3).astype(dtype)
    dskip = rng.standard_normal(D).astype(dtype)
    gy = rng.standard_normal((B, T, D)).astype(dtype)
    return x, abar, bbar, c, mask, dskip, gy


def time_backend(mod, inputs, repeats):
    x, abar, bbar, c, mask, dskip, gy = inputs
    best_fwd = best_bwd = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        y, h = mod.scan_forward(x, abar, bbar, c, mask, dskip)
        t1 = time.perf_counter()
        mod.scan_backward(gy, x, abar, bbar, c, mask, dskip, h)
        t2 = time.perf_counter()
        best_fwd = min(best_fwd, t1 - t0)
        best_bwd = min(best_bwd, t2 - t1)
    return best_fwd, best_bwd, y


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    configs = [
        ("small (B=4, T=256, D=16, N=8)", (4, 256, 16, 8)),
        ("medium (B=8, T=1024, D=32, N=8)", (8, 1024, 32, 8)),
        ("large (B=16, T=2304, D=32, N=8)", (16, 2304, 32, 8)),
    ]
    print(f"{'config':36s} {'backend':8s} {'fwd ms':>10s} {'bwd ms':>10s} {'speedup':>8s}")
    for label, shape in configs:
        inputs = make_inputs(rng, *shape)
        np_fwd, np_bwd, np_y = time_backend(_scan_np, inputs, args.repeats)
        print(f"{label:36s} {'numpy':8s} {np_fwd * 1e3:10.2f} {np_bwd * 1e3:10.2f} {'1.0x':>8s}")
        if _scan_cy is None:
            print(f"{label:36s} {'cython':8s} {'n/a':>10s} {'n/a':>10s} {'n/a':>8s}")
            continue
        cy_fwd, cy_bwd, cy_y = time_backend(_scan_cy, inputs, args.repeats)
        assert np.abs(np_y - cy_y).max() < 1e-4, "backends disagree"
        speed = (np_fwd + np_bwd) / (cy_fwd + cy_bwd)
        print(f"{label:36s} {'cython':8s} {cy_fwd * 1e3:10.2f} {cy_bwd * 1e3:10.2f} {speed:7.1f}x")


if __name__ == "__main__":
    main()
