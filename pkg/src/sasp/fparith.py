"""FP32 bit helpers, sign-magnitude INT8 weights and the hybrid multiplier.

INT8 weights are carried as ``uint8`` arrays holding the sign-magnitude byte
directly (bit 7 = sign, bits 0-6 = magnitude), the same layout the matrix
file format and the simulated array use.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels

SM_SIGN = 0x80
SM_MAG = 0x7F
QMAX = 127


class FloatDomainError(ValueError):
    """Operand outside the datapath domain (NaN, infinity or subnormal)."""


@dataclass(frozen=True)
class Fp32Parts:
    sign: int
    exponent: int
    mantissa: int


@dataclass(frozen=True)
class Int8SM:
    sign: int
    magnitude: int

    def __post_init__(self):
        if not 0 <= self.magnitude <= QMAX:
            raise ValueError(f"magnitude {self.magnitude} outside [0, 127]")
        if self.sign not in (0, 1):
            raise ValueError(f"sign must be 0 or 1, got {self.sign}")
        if self.magnitude == 0 and self.sign:
            object.__setattr__(self, "sign", 0)

    @classmethod
    def from_int(cls, v):
        return cls(int(v < 0), abs(int(v)))

    @classmethod
    def from_byte(cls, b):
        b = int(b)
        return cls((b >> 7) & 1, b & SM_MAG)

    @property
    def byte(self):
        return (self.sign << 7) | self.magnitude

    @property
    def value(self):
        return -self.magnitude if self.sign else self.magnitude


@dataclass(frozen=True)
class QuantizedMatrix:
    """Sign-magnitude INT8 payload plus its per-tensor scale."""

    data: np.ndarray
    scale: float

    def __post_init__(self):
        s = float(self.scale)
        if not (np.isfinite(s) and s > 0):
            raise ValueError(f"quantization scale must be finite and > 0, got {self.scale}")

    @property
    def shape(self):
        return self.data.shape


def f32_bits(x):
    return int(np.float32(x).view(np.uint32))


def bits_f32(b):
    return np.uint32(b).view(np.float32)


def _check_float(x):
    b = f32_bits(x)
    exp = (b >> 23) & 0xFF
    if exp == 0xFF:
        raise FloatDomainError(f"{x!r} is NaN or infinite")
    if exp == 0 and b & 0x7FFFFF:
        raise FloatDomainError(f"{x!r} is subnormal")
    return b


def decompose(x):
    b = _check_float(x)
    return Fp32Parts(b >> 31, (b >> 23) & 0xFF, b & 0x7FFFFF)


def recompose(p):
    return bits_f32((p.sign << 31) | (p.exponent << 23) | p.mantissa)


def check_normal_array(x, what="value"):
    """Raise :class:`FloatDomainError` naming the first NaN/inf/subnormal element."""
    x = np.asarray(x, dtype=np.float32)
    b = x.view(np.uint32)
    exp = (b >> 23) & 0xFF
    bad = (exp == 0xFF) | ((exp == 0) & ((b & 0x7FFFFF) != 0))
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise FloatDomainError(f"{what} at index {idx} is {x[idx]!r} (NaN, inf or subnormal)")


def check_finite_array(x, what="value"):
    x = np.asarray(x)
    bad = ~np.isfinite(x)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise FloatDomainError(f"{what} at index {idx} is not finite: {x[idx]!r}")


def hybrid_mul(a, w):
    """Multiply an FP32 activation by a sign-magnitude INT8 weight.

    Mirrors the hardware datapath: expand the mantissa with its hidden one,
    integer-multiply by the weight magnitude, renormalise by right shifts,
    truncate to 23 fraction bits and XOR the signs. Zero operands bypass to
    +0.0.
    """
    if not isinstance(w, Int8SM):
        w = Int8SM.from_int(w)
    abits = _check_float(a)
    return bits_f32(int(kernels.hybrid_bits_np(abits, w.byte)))


def hybrid_mul_array(a, wsm):
    """Element-wise hybrid product of fp32 array ``a`` and SM-byte array ``wsm``."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    check_normal_array(a, "activation")
    wsm = np.ascontiguousarray(np.broadcast_to(np.asarray(wsm, dtype=np.uint8), a.shape))
    out = np.empty(a.shape, np.uint32)
    kernels.hybrid_array(a.reshape(-1).view(np.uint32), wsm.reshape(-1), out.reshape(-1))
    return out.view(np.float32)


def sm_encode(values):
    """Signed integers in [-127, 127] to sign-magnitude bytes (zero is +0)."""
    v = np.asarray(values, dtype=np.int64)
    if np.any(np.abs(v) > QMAX):
        raise ValueError("magnitudes must be <= 127")
    return (np.where(v < 0, SM_SIGN, 0) | np.abs(v)).astype(np.uint8)


def sm_decode(data):
    """Sign-magnitude bytes to signed integers."""
    d = np.asarray(data, dtype=np.uint8).astype(np.int64)
    mag = d & SM_MAG
    return np.where(d & SM_SIGN, -mag, mag)


def quantize_weights(w):
    w = np.asarray(w, dtype=np.float32)
    check_finite_array(w, "weight")
    amax = float(np.max(np.abs(w))) if w.size else 0.0
    if amax == 0.0:
        return QuantizedMatrix(np.zeros(w.shape, np.uint8), 1.0)
    scale = float(np.float32(amax / QMAX))
    mag = np.floor(np.abs(w.astype(np.float64)) / scale + 0.5)
    mag = np.clip(mag, 0, QMAX).astype(np.uint8)
    sign = np.where((w < 0) & (mag > 0), SM_SIGN, 0).astype(np.uint8)
    return QuantizedMatrix(sign | mag, scale)


def dequantize(q, scale=None):
    if scale is None:
        q, scale = q.data, q.scale
    return (sm_decode(q) * np.float64(scale)).astype(np.float32)
