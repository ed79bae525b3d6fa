"""Reference implementations that share no code path with the package."""
import struct

import numpy as np


def hybrid_oracle(a, w_sm):
    """Widen to float64, multiply by the signed magnitude, truncate to 23 bits.

    Vectorized over arrays. Zero operands give +0.0.
    """
    a = np.asarray(a, np.float32).astype(np.float64)
    w_sm = np.asarray(w_sm, np.uint8)
    mag = (w_sm & 0x7F).astype(np.float64)
    sign = np.where(w_sm & 0x80, -1.0, 1.0)
    p = a * mag * sign  # exact: 24 + 7 bits fit in 53
    # float64 keeps 52 fraction bits, float32 keeps 23: drop the low 29
    bits = p.view(np.uint64) & ~np.uint64((1 << 29) - 1)
    out = bits.view(np.float64).astype(np.float32)
    return np.where(p == 0, np.float32(0.0), out).astype(np.float32)


def hybrid_oracle_scalar(a, value):
    p = float(np.float32(a)) * value
    if p == 0:
        return np.float32(0.0)
    b = struct.unpack("<Q", struct.pack("<d", p))[0] & ~((1 << 29) - 1)
    return np.float32(struct.unpack("<d", struct.pack("<Q", b))[0])


def tile_matmul(x, w, mul):
    """y[m, j] = sum over ascending i of mul(x[m, i], w[i, j]), starting at +0.0."""
    M, T = x.shape
    y = np.zeros((M, w.shape[1]), np.float32)
    for m in range(M):
        for j in range(w.shape[1]):
            acc = np.float32(0.0)
            for i in range(T):
                acc = np.float32(acc + mul(x[m, i], w[i, j]))
            y[m, j] = acc
    return y


def fp32_mul(a, b):
    return np.float32(np.float32(a) * np.float32(b))


def tile_matmul_fast(x, w, products):
    """Vectorized version of :func:`tile_matmul` for precomputed ``products``.

    ``products[m, i, j]`` is the float32 product of x[m, i] and w[i, j].
    """
    M, T, N = products.shape
    acc = np.zeros((M, N), np.float32)
    for i in range(T):
        acc = (acc + products[:, i, :]).astype(np.float32)
    return acc


def tiled_reference(x, w, T, int8=False, scale=1.0):
    """Order-matched tiled GEMM: per tile ascending i, tiles summed ascending k."""
    M, K = x.shape
    N = w.shape[1]
    gk, gn = -(-K // T), -(-N // T)
    xp = np.zeros((M, gk * T), np.float32)
    xp[:, :K] = x
    wp = np.zeros((gk * T, gn * T), w.dtype)
    wp[:K, :N] = w
    y = np.zeros((M, gn * T), np.float32)
    for n in range(gn):
        for k in range(gk):
            xs = xp[:, k * T:(k + 1) * T]
            ws = wp[k * T:(k + 1) * T, n * T:(n + 1) * T]
            if int8:
                prods = hybrid_oracle(xs[:, :, None], ws[None, :, :])
            else:
                prods = (xs[:, :, None] * ws[None, :, :]).astype(np.float32)
            part = tile_matmul_fast(xs, ws, prods)
            y[:, n * T:(n + 1) * T] = (y[:, n * T:(n + 1) * T] + part).astype(np.float32)
    if int8:
        y = (y * np.float32(scale)).astype(np.float32)
    return y[:, :N]


def brute_prune(mats, T, rate):
    """Exhaustive sort of every tile norm; returns the set of (id, r, c) pruned."""
    entries = []
    for mid, w in mats:
        K, N = w.shape
        for r in range(-(-K // T)):
            for c in range(-(-N // T)):
                block = np.abs(w[r * T:(r + 1) * T, c * T:(c + 1) * T].astype(np.float64))
                norm = 0.0
                for v in block.reshape(-1):
                    norm += v
                entries.append((norm, mid, r * (-(-N // T)) + c, r, c))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    k = int(np.floor(rate * len(entries)))
    return {(mid, r, c) for _, mid, _, r, c in entries[:k]}


def brute_pareto(points):
    keep = []
    for p in points:
        dominated = False
        for q in points:
            axes = [(q.speedup, p.speedup), (p.qos_proxy, q.qos_proxy), (p.aep, q.aep)]
            if all(a >= b for a, b in axes) and any(a > b for a, b in axes):
                dominated = True
        if not dominated:
            keep.append(p)
    return keep



def bits(a):
    return np.ascontiguousarray(a, np.float32).view(np.uint32)


def assert_bit_equal(a, b):
    a, b = np.asarray(a, np.float32), np.asarray(b, np.float32)
    assert a.shape == b.shape
    diff = np.argwhere(bits(a) != bits(b))
    assert diff.size == 0, (
        f"first mismatch at {tuple(diff[0])}: {a[tuple(diff[0])]!r} != {b[tuple(diff[0])]!r}")
