import numpy as np
import pytest

from sasp.accel import (ArrayConfig, ArrayState, Flush, ProgramError, ProgWeight, Stream,
                        WeightFormat, cycles_stream, cycles_weight_load, exec_tile, pack_int8,
                        run_program, stream_program, tile_program, weight_program)
from sasp.fparith import Int8SM, hybrid_mul

from oracles import assert_bit_equal, fp32_mul, tile_matmul

FP32, INT8 = WeightFormat.FP32, WeightFormat.INT8


def _int8_mul(a, b):
    return hybrid_mul(a, Int8SM.from_byte(b))


def test_config_validation():
    for bad in (dict(size=0), dict(size=1025), dict(size=4, pipe_depth=0),
                dict(size=4, instr_overhead=-1)):
        with pytest.raises(ValueError):
            ArrayConfig(**bad)
    assert ArrayConfig(4, "int8").weight_format is INT8


@pytest.mark.parametrize("fmt, expected", [(FP32, 64), (INT8, 16)])
def test_weight_load_cycles(fmt, expected):
    assert cycles_weight_load(ArrayConfig(8, fmt, instr_overhead=0)) == expected


@pytest.mark.parametrize("T", [2, 4, 6, 8, 16, 32, 64])
def test_weight_load_ratio(T):
    a = cycles_weight_load(ArrayConfig(T, FP32))
    b = cycles_weight_load(ArrayConfig(T, INT8))
    assert a == 4 * b


def test_weight_load_odd_size_rounds_up():
    assert cycles_weight_load(ArrayConfig(3, INT8, instr_overhead=0)) == 3
    assert cycles_weight_load(ArrayConfig(1, INT8, instr_overhead=0)) == 1


@pytest.mark.parametrize("T, M, pipe, expected", [(1, 1, 1, 3), (8, 64, 4, 531)])
def test_stream_cycles(T, M, pipe, expected):
    assert cycles_stream(ArrayConfig(T, pipe_depth=pipe, instr_overhead=0), M) == expected


def test_stream_cycles_amortize():
    cfg = ArrayConfig(8)
    r = cycles_stream(cfg, 20000) / cycles_stream(cfg, 10000)
    assert 1.99 < r < 2.0
    with pytest.raises(ValueError):
        cycles_stream(cfg, 0)


def test_exec_tile_identity(rng):
    x = rng.standard_normal((9, 4)).astype(np.float32)
    y, _ = exec_tile(ArrayConfig(4), np.eye(4, dtype=np.float32), x)
    assert_bit_equal(y, x)


def test_exec_tile_zero(rng):
    x = rng.standard_normal((5, 4)).astype(np.float32)
    y, _ = exec_tile(ArrayConfig(4), np.zeros((4, 4), np.float32), x)
    assert not y.any() and not np.signbit(y).any()


@pytest.mark.parametrize("fmt", [FP32, INT8])
@pytest.mark.parametrize("T, M", [(1, 3), (3, 5), (8, 16)])
def test_exec_tile_matches_host_loop(rng, fmt, T, M):
    cfg = ArrayConfig(T, fmt)
    x = rng.standard_normal((M, T)).astype(np.float32)
    if fmt is INT8:
        w = rng.integers(0, 256, (T, T)).astype(np.uint8)
        ref = tile_matmul(x, w, _int8_mul)
    else:
        w = rng.standard_normal((T, T)).astype(np.float32)
        ref = tile_matmul(x, w, fp32_mul)
    y, stats = exec_tile(cfg, w, x)
    assert_bit_equal(y, ref)
    assert stats.total_cycles == cycles_weight_load(cfg) + cycles_stream(cfg, M)


def test_exec_tile_zero_column(rng):
    w = rng.standard_normal((4, 4)).astype(np.float32)
    w[:, 2] = 0
    x = rng.standard_normal((6, 4)).astype(np.float32) * 1e3
    y, _ = exec_tile(ArrayConfig(4), w, x)
    assert (y[:, 2].view(np.uint32) == 0).all()


def test_exec_tile_errors(rng):
    with pytest.raises(ValueError):
        exec_tile(ArrayConfig(4), np.zeros((3, 3)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        exec_tile(ArrayConfig(4), np.zeros((4, 4)), np.zeros((2, 3)))
    x = np.ones((2, 4), np.float32)
    x[1, 1] = np.nan
    with pytest.raises(ValueError):
        exec_tile(ArrayConfig(4), np.zeros((4, 4)), x)
    x[1, 1] = 1e-40
    with pytest.raises(ValueError):
        exec_tile(ArrayConfig(4, INT8), np.zeros((4, 4), np.uint8), x)


def test_empty_program():
    out, cycles = run_program(ArrayConfig(4), [])
    assert out.size == 0 and cycles == 0


@pytest.mark.parametrize("fmt", [FP32, INT8])
def test_program_matches_closed_form_and_tile(rng, fmt):
    cfg = ArrayConfig(4, fmt)
    x = rng.standard_normal((7, 4)).astype(np.float32)
    w = (rng.integers(0, 256, (4, 4)).astype(np.uint8) if fmt is INT8
         else rng.standard_normal((4, 4)).astype(np.float32))
    out, cycles = run_program(cfg, weight_program(cfg, w) + stream_program(x))
    y, stats = exec_tile(cfg, w, x)
    assert cycles == cycles_weight_load(cfg) + cycles_stream(cfg, 7) == stats.total_cycles
    assert_bit_equal(out.reshape(7, 4), y)


def test_two_tiles_add_linearly(rng):
    cfg = ArrayConfig(4)
    w1, w2 = rng.standard_normal((2, 4, 4)).astype(np.float32)
    x1 = rng.standard_normal((3, 4)).astype(np.float32)
    x2 = rng.standard_normal((5, 4)).astype(np.float32)
    out, cycles = run_program(cfg, tile_program(cfg, w1, x1) + tile_program(cfg, w2, x2))
    assert cycles == 2 * cycles_weight_load(cfg) + cycles_stream(cfg, 3) + cycles_stream(cfg, 5)
    assert_bit_equal(out[:12].reshape(3, 4), exec_tile(cfg, w1, x1)[0])
    assert_bit_equal(out[12:].reshape(5, 4), exec_tile(cfg, w2, x2)[0])


def test_stream_returns_outputs_in_order(rng):
    cfg = ArrayConfig(2)
    st = ArrayState(cfg)
    for ins in weight_program(cfg, np.eye(2, dtype=np.float32)):
        st.prog_weight(ins)
    got = []
    vals = np.arange(1, 21, dtype=np.float32)
    for v in vals:
        r = st.stream(Stream(float(v)))
        if r is not None:
            got.append(r)
    # row 0 surfaces during the beat of row 3; after that one value pops per Stream
    assert len(got) == 20 - 2 * 3 - 1
    got += st.flush()
    assert np.array_equal(np.array(got, np.float32), vals)


def test_program_errors():
    cfg = ArrayConfig(4)
    with pytest.raises(ProgramError):
        run_program(cfg, [Stream(1.0)])
    with pytest.raises(ProgramError):
        run_program(cfg, [ProgWeight(4, 0, 0)])
    with pytest.raises(ProgramError):
        run_program(cfg, [ProgWeight(0, 0, 0), Stream(1.0), Flush()])
    with pytest.raises(ProgramError):
        run_program(ArrayConfig(1, INT8), [ProgWeight(0, 0, 0x0101)])


def test_int8_packing_row_major():
    cfg = ArrayConfig(3, INT8)
    w = np.arange(9, dtype=np.uint8)
    prog = weight_program(cfg, w.reshape(3, 3))
    assert len(prog) == 3
    assert (prog[1].row, prog[1].col) == (1, 1)
    assert prog[0].word == pack_int8([0, 1, 2, 3])
    st = ArrayState(cfg)
    for ins in prog:
        st.prog_weight(ins)
    assert np.array_equal(st.weights(), w.reshape(3, 3))


def test_weights_stationary(rng):
    cfg = ArrayConfig(4)
    w = rng.standard_normal((4, 4)).astype(np.float32)
    st = ArrayState(cfg)
    for ins in weight_program(cfg, w):
        st.prog_weight(ins)
    for v in rng.standard_normal(40):
        st.stream(Stream(float(v)))
    st.flush()
    assert_bit_equal(st.weights(), w)
