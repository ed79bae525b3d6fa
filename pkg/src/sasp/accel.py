"""Weight-stationary systolic array: instruction model, mesh state and cycle model.

The host drives the array through three instructions. ``ProgWeight`` writes
one 32-bit word of weights, ``Stream`` pushes one input activation and pops
one output activation, ``Flush`` drains the skew registers and the MAC
pipeline. Each ``ProgWeight`` and ``Stream`` costs ``1 + instr_overhead``
cycles; the mesh advances one beat per full input row, hidden behind the
stream instructions. A flush costs ``2T - 1`` drain beats plus
``pipe_depth`` cycles.
"""
import enum
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fparith import check_finite_array, check_normal_array


class WeightFormat(str, enum.Enum):
    FP32 = "fp32"
    INT8 = "int8"

    def __str__(self):
        return self.value


class ProgramError(RuntimeError):
    """Malformed instruction sequence."""


@dataclass(frozen=True)
class ArrayConfig:
    size: int
    weight_format: WeightFormat = WeightFormat.FP32
    pipe_depth: int = 4
    instr_overhead: int = 1

    def __post_init__(self):
        object.__setattr__(self, "weight_format", WeightFormat(self.weight_format))
        if not 1 <= self.size <= 1024:
            raise ValueError(f"array size must be in [1, 1024], got {self.size}")
        if self.pipe_depth < 1:
            raise ValueError(f"pipe_depth must be >= 1, got {self.pipe_depth}")
        if self.instr_overhead < 0:
            raise ValueError(f"instr_overhead must be >= 0, got {self.instr_overhead}")

    @property
    def int8(self):
        return self.weight_format is WeightFormat.INT8

    @property
    def instr_cycles(self):
        return 1 + self.instr_overhead


@dataclass
class CycleStats:
    weight_load_cycles: int = 0
    stream_cycles: int = 0
    skipped_tile_count: int = 0
    skipped_cycles: int = 0

    @property
    def total_cycles(self):
        return self.weight_load_cycles + self.stream_cycles

    def __add__(self, other):
        return CycleStats(
            self.weight_load_cycles + other.weight_load_cycles,
            self.stream_cycles + other.stream_cycles,
            self.skipped_tile_count + other.skipped_tile_count,
            self.skipped_cycles + other.skipped_cycles,
        )

    def to_dict(self):
        return {
            "weight_load_cycles": self.weight_load_cycles,
            "stream_cycles": self.stream_cycles,
            "skipped_tile_count": self.skipped_tile_count,
            "skipped_cycles": self.skipped_cycles,
            "total_cycles": self.total_cycles,
        }


def cycles_weight_load(cfg):
    words = cfg.size * cfg.size
    if cfg.int8:
        words = -(-words // 4)
    return words * cfg.instr_cycles


def cycles_stream(cfg, m):
    if m < 1:
        raise ValueError(f"need at least one streamed row, got {m}")
    return m * cfg.size * cfg.instr_cycles + (2 * cfg.size - 1) + cfg.pipe_depth


def cycles_tile(cfg, m):
    return cycles_weight_load(cfg) + cycles_stream(cfg, m)


# -- instructions -------------------------------------------------------------


@dataclass(frozen=True)
class ProgWeight:
    row: int
    col: int
    word: int


@dataclass(frozen=True)
class Stream:
    value: float


@dataclass(frozen=True)
class Flush:
    pass


def pack_fp32(w):
    return struct.unpack("<I", struct.pack("<f", float(w)))[0]


def pack_int8(sm_bytes):
    """Four SM bytes (first slot in the low byte) to one 32-bit word."""
    b = list(sm_bytes) + [0] * (4 - len(sm_bytes))
    return b[0] | (b[1] << 8) | (b[2] << 16) | (b[3] << 24)


def weight_program(cfg, w_tile):
    """``ProgWeight`` instructions loading a full T x T tile."""
    T = cfg.size
    w_tile = np.asarray(w_tile)
    if w_tile.shape != (T, T):
        raise ValueError(f"tile shape {w_tile.shape} != ({T}, {T})")
    if not cfg.int8:
        return [ProgWeight(i, j, pack_fp32(w_tile[i, j])) for i in range(T) for j in range(T)]
    flat = w_tile.astype(np.uint8).reshape(-1)
    out = []
    for s in range(0, flat.size, 4):
        out.append(ProgWeight(s // T, s % T, pack_int8(flat[s:s + 4].tolist())))
    return out


def stream_program(x_slab):
    return [Stream(float(v)) for v in np.asarray(x_slab, np.float32).reshape(-1)]


def tile_program(cfg, w_tile, x_slab):
    return weight_program(cfg, w_tile) + stream_program(x_slab) + [Flush()]


# -- event-driven state -------------------------------------------------------


class ArrayState:
    """Register state of one T x T array. Single owner; not thread-safe."""

    def __init__(self, cfg):
        self.cfg = cfg
        T = cfg.size
        self.wf = np.zeros((T, T), np.float32)
        self.wsm = np.zeros((T, T), np.uint8)
        self.in_skew = np.zeros((T, T), np.float32)
        self.act = np.zeros((T, T), np.float32)
        self.psum = np.zeros((T, T), np.float32)
        self.out_skew = np.zeros((T, T), np.float32)
        self._incoming = np.zeros(T, np.float32)
        self._row = np.zeros(T, np.float32)
        self._out_row = np.zeros(T, np.float32)
        self._fbuf = np.zeros(1, np.float32)
        self._ubuf = self._fbuf.view(np.uint32)
        self.cycles = 0
        self.beats = 0
        self.programmed = False
        self._fill = 0
        self._row_beats = []
        self._outbox = []

    def weights(self):
        return (self.wsm if self.cfg.int8 else self.wf).copy()

    @property
    def in_flight(self):
        return bool(self._row_beats) or self._fill > 0

    def _beat(self, row):
        self._incoming[:] = row
        kernels.beat(self.in_skew, self.act, self.psum, self.out_skew, self._incoming,
                     self.wf, self.wsm, self.cfg.int8, self._out_row, self._fbuf, self._ubuf)
        lag = 2 * self.cfg.size - 1
        if self._row_beats and self.beats - self._row_beats[0] == lag:
            self._row_beats.pop(0)
            self._outbox.extend(self._out_row.tolist())
        self.beats += 1

    def prog_weight(self, ins):
        T = self.cfg.size
        if not (0 <= ins.row < T and 0 <= ins.col < T):
            raise ProgramError(f"weight slot ({ins.row}, {ins.col}) outside {T}x{T} array")
        if self.in_flight:
            self.flush()
        slot = ins.row * T + ins.col
        if self.cfg.int8:
            for b in range(4):
                byte = (ins.word >> (8 * b)) & 0xFF
                s = slot + b
                if s >= T * T:
                    if byte:
                        raise ProgramError(f"packed weight byte {b} falls past the last slot")
                    continue
                self.wsm.reshape(-1)[s] = byte
        else:
            self.wf.reshape(-1)[slot] = np.uint32(ins.word & 0xFFFFFFFF).view(np.float32)
        self.programmed = True
        self.cycles += self.cfg.instr_cycles

    def stream(self, ins):
        """Push one activation; returns the popped output activation or None."""
        if not self.programmed:
            raise ProgramError("Stream issued before any ProgWeight")
        T = self.cfg.size
        v = np.float32(ins.value)
        if self.cfg.int8:
            check_normal_array(v, "streamed activation")
        else:
            check_finite_array(v, "streamed activation")
        self._row[self._fill] = v
        self._fill += 1
        self.cycles += self.cfg.instr_cycles
        if self._fill == T:
            self._row_beats.append(self.beats)
            self._beat(self._row)
            self._fill = 0
        return self._outbox.pop(0) if self._outbox else None

    def flush(self):
        """Drain all in-flight rows; returns the remaining output activations."""
        if self._fill:
            raise ProgramError(f"flush with a partial input row ({self._fill} of {self.cfg.size})")
        if not self._row_beats and not self._outbox:
            return []
        bubble = np.zeros(self.cfg.size, np.float32)
        for _ in range(2 * self.cfg.size - 1):
            self._beat(bubble)
        self.cycles += (2 * self.cfg.size - 1) + self.cfg.pipe_depth
        out, self._outbox = self._outbox, []
        return out


def run_program(cfg, instrs):
    """Execute ``instrs`` on a fresh array; returns (outputs, cycle count).

    Outputs are all popped output activations in order. A trailing flush is
    implied when rows are still in flight at the end of the program.
    """
    st = ArrayState(cfg)
    outputs = []
    for ins in instrs:
        if isinstance(ins, ProgWeight):
            if st.in_flight:
                outputs.extend(st.flush())
            st.prog_weight(ins)
        elif isinstance(ins, Stream):
            got = st.stream(ins)
            if got is not None:
                outputs.append(got)
        elif isinstance(ins, Flush):
            outputs.extend(st.flush())
        else:
            raise ProgramError(f"unknown instruction {ins!r}")
    if st.in_flight:
        outputs.extend(st.flush())
    return np.asarray(outputs, np.float32), st.cycles


def exec_tile(cfg, w_tile, x_slab):
    """Stream ``x_slab`` (M x T) through ``w_tile`` (T x T) on the mesh.

    In INT8 mode ``w_tile`` holds sign-magnitude bytes.
    """
    T = cfg.size
    w_tile = np.asarray(w_tile)
    x_slab = np.ascontiguousarray(x_slab, dtype=np.float32)
    if w_tile.shape != (T, T):
        raise ValueError(f"weight tile shape {w_tile.shape} != ({T}, {T})")
    if x_slab.ndim != 2 or x_slab.shape[1] != T or x_slab.shape[0] < 1:
        raise ValueError(f"input slab shape {x_slab.shape} incompatible with T={T}")
    if cfg.int8:
        check_normal_array(x_slab, "activation")
        wsm = np.ascontiguousarray(w_tile, dtype=np.uint8)
        wf = np.zeros((T, T), np.float32)
    else:
        check_finite_array(x_slab, "activation")
        wf = np.ascontiguousarray(w_tile, dtype=np.float32)
        check_finite_array(wf, "weight")
        wsm = np.zeros((T, T), np.uint8)
    y = np.empty_like(x_slab)
    kernels.stream(wf, wsm, cfg.int8, x_slab, y)
    M = x_slab.shape[0]
    stats = CycleStats(cycles_weight_load(cfg), cycles_stream(cfg, M))
    return y, stats

