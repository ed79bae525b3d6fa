"""Time the numba and numpy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Both backends are imported from the same module; the numba versions are
warmed up once so compilation is not counted.
"""
import argparse
import time

import numpy as np

from sasp import kernels


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    rng = np.random.default_rng(0)
    n = 10**5 if quick else 10**6
    a = rng.standard_normal(n).astype(np.float32).view(np.uint32)
    w = rng.integers(0, 256, n).astype(np.uint8)
    out = np.empty(n, np.uint32)
    yield f"hybrid multiply, {n} pairs", lambda k: getattr(kernels, f"hybrid_array_{k}")(a, w, out)

    for T, M in ((8, 64), (32, 64)):
        wf = rng.standard_normal((T, T)).astype(np.float32)
        ws = rng.integers(0, 256, (T, T)).astype(np.uint8)
        x = rng.standard_normal((M, T)).astype(np.float32)
        y = np.empty_like(x)
        for int8 in (False, True):
            name = f"stream T={T} M={M} {'int8' if int8 else 'fp32'}"
            yield name, (lambda k, wf=wf, ws=ws, x=x, y=y, int8=int8:
                         getattr(kernels, f"stream_{k}")(wf, ws, int8, x, y))

    dim = 64 if quick else 128
    T = 8
    x = rng.standard_normal((dim, dim)).astype(np.float32)
    wf = rng.standard_normal((dim, dim)).astype(np.float32)
    ws = np.zeros((dim, dim), np.uint8)
    keep = np.ones((dim // T, dim // T), bool)
    y = np.zeros((dim, dim), np.float32)
    yield f"gemm {dim}^3 T={T} fp32", lambda k: getattr(kernels, f"gemm_{k}")(x, wf, ws, False, keep, T, y)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    print(f"{'kernel':<32}{'numba s':>12}{'numpy s':>12}{'ratio':>9}")
    for name, run in cases(args.quick):
        run("jit")  # compile
        tj = _best(lambda: run("jit"), args.repeat)
        tn = _best(lambda: run("np"), args.repeat)
        print(f"{name:<32}{tj:>12.5f}{tn:>12.5f}{tn / tj:>8.1f}x")


if __name__ == "__main__":
    main()
