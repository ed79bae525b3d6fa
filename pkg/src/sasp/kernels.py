"""Hot inner loops: hybrid multiplier, PE-mesh beat, slab streaming, tiled GEMM.

Every kernel exists twice: a numba ``@njit`` version (suffix ``_jit``) and a
vectorized numpy version (suffix ``_np``). Both simulate the same register
transfer per beat and must agree bit for bit. The unsuffixed names are bound
to one of the two at import time according to ``SASP_DISABLE_JIT``.

Mesh state layout (T = array size), shared by both backends:

``in_skew[i, k]``
    slot ``k`` of the input shift register of row ``i``; row ``i`` has depth
    ``i`` so only slots ``0..i-1`` are meaningful.
``act[i, j]``
    activation register of PE (i, j); activations move one PE right per beat.
``psum[i, j]``
    partial-sum register of PE (i, j); partial sums move one PE down per beat.
``out_skew[j, k]``
    slot ``k`` of the output shift register of column ``j`` (depth ``T-1-j``).

An input row fed at beat ``m`` appears in the output register during beat
``m + 2T - 1``.
"""
import numpy as np

from ._jit import JIT_DISABLED, njit

MANT_MASK = 0x7FFFFF
HIDDEN_BIT = 0x800000
ABS_MASK = 0x7FFFFFFF
MAX_FINITE_BITS = 0x7F7FFFFF


# -- hybrid FP32 x sign-magnitude INT8 multiplier ---------------------------


@njit(cache=True, nogil=True)
def hybrid_bits_jit(abits, wsm):
    """Bit pattern of ``a * w`` for activation bits ``abits`` and SM byte ``wsm``."""
    a = np.int64(abits)
    w = np.int64(wsm)
    mag = w & 0x7F
    if (a & ABS_MASK) == 0 or mag == 0:
        return np.uint32(0)
    sign = ((a >> 31) ^ (w >> 7)) & 1
    exp = (a >> 23) & 0xFF
    prod = ((a & MANT_MASK) | HIDDEN_BIT) * mag
    shift = 0
    while (prod >> (24 + shift)) != 0:
        shift += 1
    exp += shift
    if exp > 254:
        # out of the supported range: saturate to the largest finite value
        return np.uint32((sign << 31) | MAX_FINITE_BITS)
    return np.uint32((sign << 31) | (exp << 23) | ((prod >> shift) & MANT_MASK))


def hybrid_bits_np(abits, wsm):
    abits = np.asarray(abits, dtype=np.uint32).astype(np.uint64)
    wsm = np.asarray(wsm, dtype=np.uint8).astype(np.uint64)
    abits, wsm = np.broadcast_arrays(abits, wsm)
    mag = wsm & 0x7F
    sign = ((abits >> 31) ^ (wsm >> 7)) & 1
    exp = (abits >> 23) & 0xFF
    prod = ((abits & MANT_MASK) | HIDDEN_BIT) * mag
    # prod < 2**31 so the float64 exponent is its exact bit length
    bitlen = np.frexp(prod.astype(np.float64))[1].astype(np.int64)
    shift = np.maximum(bitlen - 24, 0).astype(np.uint64)
    exp = exp + shift
    out = (sign << 31) | (exp << 23) | ((prod >> shift) & MANT_MASK)
    out = np.where(exp > 254, (sign << 31) | MAX_FINITE_BITS, out)
    zero = ((abits & ABS_MASK) == 0) | (mag == 0)
    return np.where(zero, 0, out).astype(np.uint32)


@njit(cache=True, nogil=True)
def hybrid_array_jit(abits, wsm, out):
    for n in range(abits.shape[0]):
        out[n] = hybrid_bits_jit(abits[n], wsm[n])


def hybrid_array_np(abits, wsm, out):
    out[:] = hybrid_bits_np(abits, wsm)


# -- one beat of the mesh ---------------------------------------------------


@njit(cache=True, nogil=True)
def beat_jit(in_skew, act, psum, out_skew, incoming, wf, wsm, int8, out_row, fbuf, ubuf):
    T = act.shape[0]
    # output register captures the skewed bottom row of the previous beat
    for j in range(T):
        d = T - 1 - j
        if d > 0:
            out_row[j] = out_skew[j, d - 1]
            for k in range(d - 1, 0, -1):
                out_skew[j, k] = out_skew[j, k - 1]
            out_skew[j, 0] = psum[T - 1, j]
        else:
            out_row[j] = psum[T - 1, j]
    for i in range(T - 1, -1, -1):
        if i > 0:
            left = in_skew[i, i - 1]
            for k in range(i - 1, 0, -1):
                in_skew[i, k] = in_skew[i, k - 1]
            in_skew[i, 0] = incoming[i]
        else:
            left = incoming[0]
        for j in range(T - 1, -1, -1):
            a = act[i, j - 1] if j > 0 else left
            act[i, j] = a
            if int8:
                fbuf[0] = a
                ubuf[0] = hybrid_bits_jit(ubuf[0], wsm[i, j])
                prod = fbuf[0]
            else:
                prod = a * wf[i, j]
            above = psum[i - 1, j] if i > 0 else np.float32(0.0)
            psum[i, j] = above + prod


def beat_np(in_skew, act, psum, out_skew, incoming, wf, wsm, int8, out_row, fbuf=None, ubuf=None):
    T = act.shape[0]
    idx = np.arange(T)
    depth_out = T - 1 - idx
    skew_tail = out_skew[idx, np.maximum(depth_out - 1, 0)]
    out_row[:] = np.where(depth_out > 0, skew_tail, psum[T - 1])
    if T > 1:
        out_skew[:, 1:] = out_skew[:, :-1]
    out_skew[:, 0] = psum[T - 1]

    left = np.where(idx > 0, in_skew[idx, np.maximum(idx - 1, 0)], incoming)
    if T > 1:
        in_skew[:, 1:] = in_skew[:, :-1]
    in_skew[:, 0] = incoming

    act[:, 1:] = act[:, :-1]
    act[:, 0] = left
    if int8:
        prod = hybrid_bits_np(act.view(np.uint32), wsm).view(np.float32)
    else:
        prod = act * wf
    above = np.empty_like(psum)
    above[0] = 0.0
    above[1:] = psum[:-1]
    psum[:] = above + prod


# -- stream a whole slab through one programmed tile -------------------------


@njit(cache=True, nogil=True)
def stream_jit(wf, wsm, int8, x, y):
    T = wf.shape[0]
    M = x.shape[0]
    in_skew = np.zeros((T, T), np.float32)
    act = np.zeros((T, T), np.float32)
    psum = np.zeros((T, T), np.float32)
    out_skew = np.zeros((T, T), np.float32)
    incoming = np.zeros(T, np.float32)
    out_row = np.zeros(T, np.float32)
    fbuf = np.zeros(1, np.float32)
    ubuf = fbuf.view(np.uint32)
    lag = 2 * T - 1
    for b in range(M + lag):
        if b < M:
            for i in range(T):
                incoming[i] = x[b, i]
        else:
            incoming[:] = 0.0
        beat_jit(in_skew, act, psum, out_skew, incoming, wf, wsm, int8, out_row, fbuf, ubuf)
        m = b - lag
        if m >= 0:
            for j in range(T):
                y[m, j] = out_row[j]


def stream_np(wf, wsm, int8, x, y):
    T = wf.shape[0]
    M = x.shape[0]
    in_skew = np.zeros((T, T), np.float32)
    act = np.zeros((T, T), np.float32)
    psum = np.zeros((T, T), np.float32)
    out_skew = np.zeros((T, T), np.float32)
    bubble = np.zeros(T, np.float32)
    out_row = np.zeros(T, np.float32)
    lag = 2 * T - 1
    for b in range(M + lag):
        incoming = x[b] if b < M else bubble
        beat_np(in_skew, act, psum, out_skew, incoming, wf, wsm, int8, out_row)
        if b >= lag:
            y[b - lag] = out_row


# -- tiled GEMM over a padded problem ----------------------------------------


@njit(cache=True, nogil=True)
def gemm_jit(x, wf, wsm, int8, keep, T, y):
    M = x.shape[0]
    gk, gn = keep.shape
    slab = np.empty((M, T), np.float32)
    part = np.empty((M, T), np.float32)
    for n in range(gn):
        for k in range(gk):
            if not keep[k, n]:
                continue
            for m in range(M):
                for i in range(T):
                    slab[m, i] = x[m, k * T + i]
            tf = np.ascontiguousarray(wf[k * T:(k + 1) * T, n * T:(n + 1) * T])
            ts = np.ascontiguousarray(wsm[k * T:(k + 1) * T, n * T:(n + 1) * T])
            stream_jit(tf, ts, int8, slab, part)
            for m in range(M):
                for j in range(T):
                    y[m, n * T + j] = y[m, n * T + j] + part[m, j]


def gemm_np(x, wf, wsm, int8, keep, T, y):
    M = x.shape[0]
    gk, gn = keep.shape
    part = np.empty((M, T), np.float32)
    for n in range(gn):
        cols = slice(n * T, (n + 1) * T)
        for k in range(gk):
            if not keep[k, n]:
                continue
            rows = slice(k * T, (k + 1) * T)
            stream_np(wf[rows, cols], wsm[rows, cols], int8,
                      np.ascontiguousarray(x[:, rows]), part)
            y[:, cols] += part


if JIT_DISABLED:
    hybrid_array = hybrid_array_np
    beat = beat_np
    stream = stream_np
    gemm = gemm_np
else:
    hybrid_array = hybrid_array_jit
    beat = beat_jit
    stream = stream_jit
    gemm = gemm_jit

BACKEND = "numpy" if JIT_DISABLED else "numba"
