"""Tiled weight-stationary GEMM with pruned-tile skipping."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .accel import ArrayConfig, CycleStats, cycles_stream, cycles_tile, cycles_weight_load
from .fparith import QuantizedMatrix, SM_MAG, check_finite_array, check_normal_array
from .pruner import TileMask, pad_to_tiles


class MaskIntegrityError(ValueError):
    """A tile marked as pruned holds nonzero weights."""


@dataclass
class GemmJob:
    x: np.ndarray
    w: object  # fp32 ndarray or QuantizedMatrix
    cfg: ArrayConfig
    mask: Optional[TileMask] = None

    @property
    def shape(self):
        """(M, K, N)."""
        m, k = np.shape(self.x)
        return m, k, self.w.shape[1]


@dataclass
class GemmResult:
    y: np.ndarray
    stats: CycleStats
    tiles_total: int
    tiles_executed: int


def _weights(job):
    """Padded (fp32, sm-bytes, scale) operands for the kernel."""
    T = job.cfg.size
    w = job.w
    if job.cfg.int8:
        if not isinstance(w, QuantizedMatrix):
            raise TypeError("INT8 array configuration needs a QuantizedMatrix")
        wsm = np.ascontiguousarray(pad_to_tiles(w.data.astype(np.uint8), T))
        return None, wsm, w.scale
    if isinstance(w, QuantizedMatrix):
        raise TypeError("FP32 array configuration needs fp32 weights")
    w = np.asarray(w, np.float32)
    check_finite_array(w, "weight")
    wf = np.ascontiguousarray(pad_to_tiles(w, T))
    return wf, None, None


def _keep(job, wpad):
    T = job.cfg.size
    K, N = job.w.shape
    gk, gn = wpad.shape[0] // T, wpad.shape[1] // T
    if job.mask is None:
        return np.ones((gk, gn), bool)
    g = job.mask.grid
    if g.tile_size != T or (g.rows, g.cols) != (K, N):
        raise ValueError(f"mask grid (T={g.tile_size}, {g.rows}x{g.cols}) does not match "
                         f"weights {K}x{N} on a {T}x{T} array")
    keep = job.mask.keep
    nz = wpad != 0 if wpad.dtype != np.uint8 else (wpad & SM_MAG) != 0
    tile_nz = nz.reshape(gk, T, gn, T).any(axis=(1, 3))
    bad = np.argwhere(~keep & tile_nz)
    if bad.size:
        k, n = (int(v) for v in bad[0])
        raise MaskIntegrityError(f"tile ({k}, {n}) is marked pruned but holds nonzero weights")
    return keep


def dense_equivalent_cycles(job):
    T = job.cfg.size
    M, K, N = job.shape
    tiles = (-(-K // T)) * (-(-N // T))
    return tiles * cycles_tile(job.cfg, M)


def tiled_gemm(job):
    cfg = job.cfg
    T = cfg.size
    M, K, N = job.shape
    if job.w.shape[0] != K:
        raise ValueError(f"inner dimensions differ: x is {M}x{K}, w is {job.w.shape}")
    if M < 1:
        raise ValueError("need at least one input row")
    x = np.asarray(job.x, np.float32)
    if cfg.int8:
        check_normal_array(x, "activation")
    else:
        check_finite_array(x, "activation")
    wf, wsm, scale = _weights(job)
    keep = _keep(job, wf if not cfg.int8 else wsm)
    xpad = np.zeros((M, keep.shape[0] * T), np.float32)
    xpad[:, :K] = x
    if cfg.int8:
        wf = np.zeros(wsm.shape, np.float32)
    else:
        wsm = np.zeros(wf.shape, np.uint8)
    y = np.zeros((M, keep.shape[1] * T), np.float32)
    kernels.gemm(xpad, wf, wsm, cfg.int8, np.ascontiguousarray(keep), T, y)
    if cfg.int8:
        y = y * np.float32(scale)
    y = np.ascontiguousarray(y[:, :N])

    per_tile = cycles_tile(cfg, M)
    executed = int(np.count_nonzero(keep))
    skipped = keep.size - executed
    stats = CycleStats(
        weight_load_cycles=executed * cycles_weight_load(cfg),
        stream_cycles=executed * cycles_stream(cfg, M),
        skipped_tile_count=skipped,
        skipped_cycles=skipped * per_tile,
    )
    return GemmResult(y, stats, keep.size, executed)
