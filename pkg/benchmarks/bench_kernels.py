"""Times the compiled kernels against the NumPy fallback on the training hot path.

Run as: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from contrel import _kernels_py

try:
    from contrel import _kernels_cy
except ImportError:
    _kernels_cy = None

BATCH, FEATURES, HIDDEN, REP, CLASSES = 32, 32, 64, 64, 40
REPEATS = 300


def workload(rng):
    x = rng.normal(size=(BATCH, FEATURES))
    y = rng.integers(0, CLASSES, size=BATCH).astype(np.int64)
    w1 = rng.normal(size=(FEATURES, HIDDEN))
    b1 = np.zeros(HIDDEN)
    w2 = rng.normal(size=(HIDDEN, REP))
    b2 = np.zeros(REP)
    wh = rng.normal(size=(REP, CLASSES))
    return x, y, w1, b1, w2, b2, wh


def time_fn(fn, *args):
    fn(*args)  # warmup
    start = time.perf_counter()
    for _ in range(REPEATS):
        fn(*args)
    return (time.perf_counter() - start) / REPEATS


def main():
    rng = np.random.default_rng(0)
    x, y, w1, b1, w2, b2, wh = workload(rng)
    flat = rng.normal(size=FEATURES * HIDDEN)
    grads = rng.normal(size=flat.shape)
    zeros = np.zeros_like(flat)

    rows = []
    for name, mod in (("python", _kernels_py), ("compiled", _kernels_cy)):
        if mod is None:
            print("compiled extension not built; run `pip install -e .` first")
            continue
        fwd_bwd = time_fn(mod.model_forward_backward, x, y, w1, b1, w2, b2, wh, True)
        enc = time_fn(mod.encode_batch, x, w1, b1, w2, b2, True)
        adam = time_fn(mod.adam_update, flat, grads, zeros, zeros, 1, 0.9, 0.999, 1e-8, 1e-3)
        rows.append((name, fwd_bwd, enc, adam))

    print(f"{'backend':<10} {'fwd+bwd':>12} {'encode':>12} {'adam':>12}")
    for name, fwd_bwd, enc, adam in rows:
        print(f"{name:<10} {fwd_bwd * 1e6:>10.1f}us {enc * 1e6:>10.1f}us {adam * 1e6:>10.1f}us")
    if len(rows) == 2:
        print(f"{'speedup':<10} {rows[0][1] / rows[1][1]:>11.2f}x {rows[0][2] / rows[1][2]:>11.2f}x "
              f"{rows[0][3] / rows[1][3]:>11.2f}x")


if __name__ == "__main__":
    main()
