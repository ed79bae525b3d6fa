import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sasp.fparith import quantize_weights
from sasp.pruner import TileGrid, TileMask, apply_mask, global_prune, tile_l1_norms

from oracles import brute_prune


def test_norms_uniform():
    assert np.array_equal(tile_l1_norms(np.ones((4, 4)), 2), np.full((2, 2), 4.0))


def test_norms_identity():
    # hand sums of the four 2x2 blocks
    assert tile_l1_norms(np.eye(4), 2).tolist() == [[2.0, 0.0], [0.0, 2.0]]


def test_norms_single_tile(rng):
    w = rng.standard_normal((5, 3)).astype(np.float32)
    n = tile_l1_norms(w, 8)
    assert n.shape == (1, 1)
    assert n[0, 0] == pytest.approx(np.abs(w.astype(np.float64)).sum())


def test_norms_padding():
    w = np.ones((5, 3), np.float32)
    assert tile_l1_norms(w, 2).tolist() == [[4.0, 2.0], [4.0, 2.0], [2.0, 1.0]]


def test_norms_reject_zero_tile():
    with pytest.raises(ValueError):
        tile_l1_norms(np.ones((2, 2)), 0)


def test_grid_geometry():
    g = TileGrid.for_shape((10, 7), 4)
    assert (g.grid_rows, g.grid_cols, g.pad_rows, g.pad_cols) == (3, 2, 2, 1)


@pytest.mark.parametrize("rate, pruned", [(0.0, 0), (1.0, 8)])
def test_prune_extremes(rate, pruned, rng):
    ws = [("a", rng.standard_normal((4, 4))), ("b", rng.standard_normal((4, 4)))]
    masks, rep = global_prune(ws, 2, rate)
    assert rep.total_pruned == pruned
    assert sum(m.n_pruned for m in masks.values()) == pruned


def _with_norms(norms):
    w = np.zeros((4, 4), np.float32)
    for (r, c), v in zip([(0, 0), (0, 1), (1, 0), (1, 1)], norms):
        w[2 * r, 2 * c] = v
    return w


def test_prune_two_matrices():
    a = _with_norms([0.1, 5, 5, 5])
    b = _with_norms([0.2, 9, 9, 9])
    masks, rep = global_prune([("A", a), ("B", b)], 2, 0.25)
    assert rep.total_pruned == 2
    assert masks["A"].keep.tolist() == [[False, True], [True, True]]
    assert masks["B"].keep.tolist() == [[False, True], [True, True]]
    assert rep.threshold == pytest.approx(0.2)


def test_prune_heterogeneous_per_matrix():
    a = _with_norms([0.1, 0.2, 0.3, 5])
    b = _with_norms([9, 9, 9, 9])
    _, rep = global_prune([("A", a), ("B", b)], 2, 0.375)
    assert rep.pruned == {"A": 3, "B": 0}
    assert rep.sparsity("A") == 0.75


def test_tie_break_by_id_then_row_major():
    z = np.zeros((4, 4), np.float32)
    masks, _ = global_prune([("b", z), ("a", z)], 2, 0.5)
    assert not masks["a"].keep.any()
    assert masks["b"].keep.all()
    masks, _ = global_prune([("a", z)], 2, 0.5)
    assert masks["a"].keep.tolist() == [[False, False], [True, True]]


@pytest.mark.parametrize("rate", [-0.1, 1.5, float("nan")])
def test_prune_bad_rate(rate):
    with pytest.raises(ValueError):
        global_prune([("a", np.ones((2, 2)))], 1, rate)


def test_prune_empty():
    with pytest.raises(ValueError):
        global_prune([], 2, 0.5)
    masks, rep = global_prune([], 2, 0.0)
    assert masks == {} and rep.total_tiles == 0


def test_apply_mask_examples(rng):
    w = rng.standard_normal((6, 6)).astype(np.float32)
    keep = TileMask.all_keep(w.shape, 3)
    assert np.array_equal(apply_mask(w, keep).view(np.uint32), w.view(np.uint32))
    none = TileMask(keep.grid, np.zeros((2, 2), bool))
    assert not apply_mask(w, none).any()
    one = TileMask(keep.grid, np.array([[True, True], [True, False]]))
    out = apply_mask(w, one)
    expect = w.copy()
    for i in range(3, 6):
        for j in range(3, 6):
            expect[i, j] = 0.0
    assert np.array_equal(out.view(np.uint32), expect.view(np.uint32))


def test_apply_mask_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_mask(np.ones((4, 4)), TileMask.all_keep((4, 6), 2))


shapes = st.tuples(st.integers(1, 12), st.integers(1, 12))


@st.composite
def matrix_sets(draw, max_tiles=64):
    T = draw(st.integers(1, 4))
    n = draw(st.integers(1, 4))
    mats, total = [], 0
    for i in range(n):
        k, c = draw(shapes)
        tiles = -(-k // T) * -(-c // T)
        if total + tiles > max_tiles and mats:
            break
        total += tiles
        # small integer values give plenty of exact ties
        vals = draw(st.lists(st.integers(-2, 2), min_size=k * c, max_size=k * c))
        mats.append((f"m{i}", np.array(vals, np.float32).reshape(k, c)))
    return T, mats


@settings(max_examples=150, deadline=None)
@given(matrix_sets(), st.floats(0, 1))
def test_matches_exhaustive_oracle(data, rate):
    T, mats = data
    masks, rep = global_prune(mats, T, rate)
    got = {(mid, r, c) for mid, m in masks.items() for r, c in zip(*np.nonzero(~m.keep))}
    assert got == brute_prune(mats, T, rate)
    assert rep.total_pruned == math.floor(rate * rep.total_tiles)


@settings(max_examples=100, deadline=None)
@given(matrix_sets(), st.floats(0, 1))
def test_norm_consistency_and_idempotence(data, rate):
    T, mats = data
    masks, _ = global_prune(mats, T, rate)
    pruned, kept = [], []
    for mid, w in mats:
        n = tile_l1_norms(w, T)
        pruned += n[~masks[mid].keep].tolist()
        kept += n[masks[mid].keep].tolist()
        once = apply_mask(w, masks[mid])
        assert np.array_equal(apply_mask(once, masks[mid]).view(np.uint32), once.view(np.uint32))
        assert not once[~masks[mid].element_mask()].any()
    if pruned and kept:
        assert max(pruned) <= min(kept)


@settings(max_examples=50, deadline=None)
@given(matrix_sets(), st.floats(0, 1))
def test_pruning_survives_quantization(data, rate):
    T, mats = data
    masks, _ = global_prune(mats, T, rate)
    for mid, w in mats:
        q = quantize_weights(apply_mask(w, masks[mid]))
        assert not (q.data[~masks[mid].element_mask()] & 0x7F).any()


def test_order_independence(rng):
    mats = [(f"m{i}", rng.integers(-1, 2, (4, 6)).astype(np.float32)) for i in range(4)]
    a, _ = global_prune(mats, 2, 0.4)
    b, _ = global_prune(mats[::-1], 2, 0.4)
    assert all(np.array_equal(a[k].keep, b[k].keep) for k in a)
