"""Time the numpy and numba kernel backends on the shapes the model uses.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]
"""
import argparse
import json
import time

import numpy as np

from dehazekit.kernels import BACKEND, _numba, _numpy


def best_of(fn, repeat):
    fn()  # warm-up (numba compiles here)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    r = np.random.default_rng(0)
    x = r.normal(size=(1, 24, 128, 128)).astype(np.float32)
    wd = r.normal(size=(48, 24, 3, 3)).astype(np.float32)
    ww = r.normal(size=(24, 1, 3, 3)).astype(np.float32)
    gd = r.normal(size=(1, 48, 128, 128))
    gw = r.normal(size=(1, 24, 128, 128))
    img = r.uniform(size=(512, 512))
    vals = np.concatenate([r.normal(m, 10, 20_000) for m in (60, 135, 200)])
    init = np.array([50.0, 120.0, 210.0])
    return [
        ("conv3x3 dense 24->48 @128", lambda k: k.conv2d_forward(x, wd, 1, 1, 1)),
        ("conv3x3 dense backward", lambda k: k.conv2d_backward(x, wd, gd, 1, 1, 1)),
        ("conv3x3 depthwise 24 @128", lambda k: k.conv2d_forward(x, ww, 1, 1, 24)),
        ("conv3x3 depthwise backward", lambda k: k.conv2d_backward(x, ww, gw, 1, 1, 24)),
        ("min_filter r=7 @512", lambda k: k.min_filter(img, 7)),
        ("kmeans1d k=3 n=60000", lambda k: k.kmeans1d(vals, init, 100, 1e-6)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    a = ap.parse_args()
    rows = []
    for name, fn in cases():
        tn = best_of(lambda: fn(_numpy), a.repeat)
        tb = best_of(lambda: fn(_numba), a.repeat)
        rows.append({"case": name, "numpy_ms": 1e3 * tn, "numba_ms": 1e3 * tb, "speedup": tn / tb})
    # the raw loop kernels, which the dispatcher bypasses for dense convs
    r = np.random.default_rng(1)
    x = r.normal(size=(1, 24, 64, 64)).astype(np.float32)
    w = r.normal(size=(48, 24, 3, 3)).astype(np.float32)
    tn = best_of(lambda: _numpy.conv2d_forward(x, w, 1, 1, 1), a.repeat)
    tl = best_of(lambda: _numba.conv2d_forward_loops(x, w, 1, 1, 1), a.repeat)
    rows.append({"case": "dense @64, numba loops (not dispatched)", "numpy_ms": 1e3 * tn, "numba_ms": 1e3 * tl,
                 "speedup": tn / tl})
    if a.json:
        print(json.dumps({"default_backend": BACKEND, "rows": rows}))
        return
    print(f"{'case':<42} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for row in rows:
        print(f"{row['case']:<42} {row['numpy_ms']:>10.2f} {row['numba_ms']:>10.2f} {row['speedup']:>7.2f}x")


if __name__ == "__main__":
    main()
