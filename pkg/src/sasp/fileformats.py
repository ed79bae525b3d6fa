"""Little-endian binary matrix (``.mat``) and tile-mask (``.mask``) files.

Matrix file::

    "SASP" | version u8 = 1 | dtype u8 (0 fp32, 1 int8 sign-magnitude)
    | rows u32 | cols u32 | [scale f32, int8 only] | row-major payload

Mask file::

    "SAMK" | version u8 = 1 | tile_size u16 | grid_rows u32 | grid_cols u32
    | bitmap, ceil(rows * cols / 8) bytes, row-major, LSB first, 1 = keep
"""
import struct

import numpy as np

from .fparith import SM_MAG, QuantizedMatrix
from .pruner import TileGrid, TileMask

MATRIX_MAGIC = b"SASP"
MASK_MAGIC = b"SAMK"
VERSION = 1
DTYPE_FP32 = 0
DTYPE_INT8 = 1

_MAT_HEAD = struct.Struct("<4sBBII")
_MASK_HEAD = struct.Struct("<4sBHII")


class FormatError(ValueError):
    """Malformed or unsupported file."""


def encode_matrix(m):
    if isinstance(m, QuantizedMatrix):
        data = np.ascontiguousarray(m.data, dtype=np.uint8)
        if data.ndim != 2:
            raise ValueError("matrix must be 2-D")
        head = _MAT_HEAD.pack(MATRIX_MAGIC, VERSION, DTYPE_INT8, *data.shape)
        return head + struct.pack("<f", m.scale) + data.tobytes()
    a = np.ascontiguousarray(m, dtype="<f4")
    if a.ndim != 2:
        raise ValueError("matrix must be 2-D")
    return _MAT_HEAD.pack(MATRIX_MAGIC, VERSION, DTYPE_FP32, *a.shape) + a.tobytes()


def decode_matrix(buf, name="<buffer>"):
    if len(buf) < _MAT_HEAD.size:
        raise FormatError(f"{name}: truncated header")
    magic, version, dtype, rows, cols = _MAT_HEAD.unpack_from(buf)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    off = _MAT_HEAD.size
    if dtype == DTYPE_FP32:
        want = off + 4 * rows * cols
        if len(buf) != want:
            raise FormatError(f"{name}: payload is {len(buf) - off} bytes, expected {want - off}")
        return np.frombuffer(buf, dtype="<f4", offset=off).reshape(rows, cols).astype(np.float32)
    if dtype == DTYPE_INT8:
        want = off + 4 + rows * cols
        if len(buf) != want:
            raise FormatError(f"{name}: payload is {len(buf) - off} bytes, expected {want - off}")
        (scale,) = struct.unpack_from("<f", buf, off)
        if not (np.isfinite(scale) and scale > 0):
            raise FormatError(f"{name}: invalid scale {scale}")
        data = np.frombuffer(buf, dtype=np.uint8, offset=off + 4).reshape(rows, cols).copy()
        return QuantizedMatrix(data, float(scale))
    raise FormatError(f"{name}: unknown dtype byte {dtype:#04x}")


def write_matrix(path, m):
    with open(path, "wb") as f:
        f.write(encode_matrix(m))


def read_matrix(path):
    with open(path, "rb") as f:
        return decode_matrix(f.read(), str(path))


def encode_mask(mask):
    g = mask.grid
    keep = mask.keep.reshape(-1).astype(np.uint8)
    bits = np.packbits(keep, bitorder="little")
    return _MASK_HEAD.pack(MASK_MAGIC, VERSION, g.tile_size, g.grid_rows, g.grid_cols) + bits.tobytes()


def decode_mask(buf, shape=None, name="<buffer>"):
    """Decode a mask; ``shape`` (K, N) recovers the unpadded matrix size.

    Without ``shape`` the matrix is assumed to be an exact tile multiple.
    """
    if len(buf) < _MASK_HEAD.size:
        raise FormatError(f"{name}: truncated header")
    magic, version, t, gr, gc = _MASK_HEAD.unpack_from(buf)
    if magic != MASK_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    if t < 1:
        raise FormatError(f"{name}: tile size 0")
    n = gr * gc
    nbytes = -(-n // 8)
    if len(buf) != _MASK_HEAD.size + nbytes:
        raise FormatError(f"{name}: bitmap is {len(buf) - _MASK_HEAD.size} bytes, expected {nbytes}")
    raw = np.frombuffer(buf, dtype=np.uint8, offset=_MASK_HEAD.size)
    bits = np.unpackbits(raw, bitorder="little")
    if bits[n:].any():
        raise FormatError(f"{name}: nonzero padding bits")
    keep = bits[:n].astype(bool).reshape(gr, gc)
    if shape is None:
        grid = TileGrid(t, gr * t, gc * t)
    else:
        grid = TileGrid.for_shape(shape, t)
        if (grid.grid_rows, grid.grid_cols) != (gr, gc):
            raise FormatError(f"{name}: {gr}x{gc} tile grid does not cover a {shape[0]}x{shape[1]} "
                              f"matrix at tile size {t}")
    return TileMask(grid, keep)


def write_mask(path, mask):
    with open(path, "wb") as f:
        f.write(encode_mask(mask))


def read_mask(path, shape=None):
    with open(path, "rb") as f:
        return decode_mask(f.read(), shape, str(path))


def describe(path, limit=8):
    """Human-readable rendering of a matrix or mask file."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] == MASK_MAGIC:
        m = decode_mask(buf, name=str(path))
        g = m.grid
        lines = [f"mask tile={g.tile_size} grid={g.grid_rows}x{g.grid_cols} "
                 f"pruned={m.n_pruned}/{m.keep.size}"]
        for row in m.keep[:64]:
            lines.append("".join("#" if k else "." for k in row[:128]))
        return "\n".join(lines)
    m = decode_matrix(buf, str(path))
    if isinstance(m, QuantizedMatrix):
        r, c = m.shape
        vals = np.where(m.data & 0x80, -(m.data & SM_MAG).astype(int), m.data & SM_MAG)
        head = f"matrix int8-sm {r}x{c} scale={m.scale!r}"
    else:
        r, c = m.shape
        vals = m
        head = f"matrix fp32 {r}x{c}"
    with np.printoptions(threshold=limit * limit, edgeitems=limit // 2, linewidth=120):
        return head + "\n" + str(np.asarray(vals))
