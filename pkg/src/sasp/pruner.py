"""Tile-granular L1 pruning matched to the systolic array size."""
import math
from dataclasses import dataclass, field

import numpy as np

from .fparith import check_finite_array


@dataclass(frozen=True)
class TileGrid:
    tile_size: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.tile_size < 1:
            raise ValueError(f"tile size must be >= 1, got {self.tile_size}")

    @classmethod
    def for_shape(cls, shape, tile_size):
        if tile_size < 1:
            raise ValueError(f"tile size must be >= 1, got {tile_size}")
        k, n = shape
        return cls(tile_size, k, n)

    @property
    def grid_rows(self):
        return -(-self.rows // self.tile_size)

    @property
    def grid_cols(self):
        return -(-self.cols // self.tile_size)

    @property
    def pad_rows(self):
        return self.grid_rows * self.tile_size - self.rows

    @property
    def pad_cols(self):
        return self.grid_cols * self.tile_size - self.cols

    @property
    def n_tiles(self):
        return self.grid_rows * self.grid_cols


@dataclass
class TileMask:
    grid: TileGrid
    keep: np.ndarray

    def __post_init__(self):
        self.keep = np.asarray(self.keep, dtype=bool)
        if self.keep.shape != (self.grid.grid_rows, self.grid.grid_cols):
            raise ValueError(
                f"mask bitmap {self.keep.shape} does not match grid "
                f"{(self.grid.grid_rows, self.grid.grid_cols)}")

    @classmethod
    def all_keep(cls, shape, tile_size):
        g = TileGrid.for_shape(shape, tile_size)
        return cls(g, np.ones((g.grid_rows, g.grid_cols), bool))

    @property
    def n_pruned(self):
        return int(self.keep.size - np.count_nonzero(self.keep))

    def element_mask(self):
        """Boolean K x N array, True where elements are kept."""
        t = self.grid.tile_size
        full = np.repeat(np.repeat(self.keep, t, axis=0), t, axis=1)
        return full[:self.grid.rows, :self.grid.cols]


@dataclass
class PruneReport:
    tile_size: int
    rate: float
    tiles: dict = field(default_factory=dict)
    pruned: dict = field(default_factory=dict)
    threshold: float = 0.0

    def sparsity(self, mid):
        return self.pruned[mid] / self.tiles[mid] if self.tiles[mid] else 0.0

    @property
    def total_tiles(self):
        return sum(self.tiles.values())

    @property
    def total_pruned(self):
        return sum(self.pruned.values())

    @property
    def global_sparsity(self):
        total = self.total_tiles
        return self.total_pruned / total if total else 0.0

    def to_dict(self):
        return {
            "tile_size": self.tile_size,
            "rate": self.rate,
            "total_tiles": self.total_tiles,
            "total_pruned": self.total_pruned,
            "global_sparsity": self.global_sparsity,
            "threshold": self.threshold,
            "matrices": {
                str(mid): {"tiles": self.tiles[mid], "pruned": self.pruned[mid],
                           "sparsity": self.sparsity(mid)}
                for mid in self.tiles
            },
        }


def pad_to_tiles(w, tile_size):
    w = np.asarray(w)
    g = TileGrid.for_shape(w.shape, tile_size)
    if g.pad_rows == 0 and g.pad_cols == 0:
        return w
    return np.pad(w, ((0, g.pad_rows), (0, g.pad_cols)))


def tile_l1_norms(w, tile_size):
    """Sum of absolute values per tile; padding contributes zero."""
    if tile_size < 1:
        raise ValueError(f"tile size must be >= 1, got {tile_size}")
    w = np.asarray(w, dtype=np.float32)
    check_finite_array(w, "weight")
    g = TileGrid.for_shape(w.shape, tile_size)
    p = np.abs(pad_to_tiles(w, tile_size).astype(np.float64))
    t = tile_size
    return p.reshape(g.grid_rows, t, g.grid_cols, t).sum(axis=(1, 3))


def global_prune(ws, tile_size, rate):
    """Prune the ``floor(rate * total)`` lowest-L1 tiles across all matrices.

    ``ws`` is a sequence of ``(matrix_id, matrix)`` pairs. Equal norms are
    ordered by matrix id, then row-major tile position.
    """
    rate = float(rate)
    if not 0.0 <= rate <= 1.0 or math.isnan(rate):
        raise ValueError(f"pruning rate must lie in [0, 1], got {rate}")
    ws = list(ws)
    if not ws and rate > 0:
        raise ValueError("no matrices to prune")
    ids = [mid for mid, _ in ws]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate matrix ids")

    norms = {mid: tile_l1_norms(w, tile_size) for mid, w in ws}
    order = {mid: r for r, mid in enumerate(sorted(ids))}
    flat_norm, flat_mid, flat_pos = [], [], []
    for mid in ids:
        n = norms[mid].reshape(-1)
        flat_norm.append(n)
        flat_mid.append(np.full(n.size, order[mid]))
        flat_pos.append(np.arange(n.size))
    report = PruneReport(tile_size, rate)
    if not ids:
        return {}, report
    flat_norm = np.concatenate(flat_norm)
    flat_mid = np.concatenate(flat_mid)
    flat_pos = np.concatenate(flat_pos)
    k = int(math.floor(rate * flat_norm.size))
    ranked = np.lexsort((flat_pos, flat_mid, flat_norm))[:k]

    keep = {mid: np.ones(norms[mid].shape, bool) for mid in ids}
    by_rank = {r: mid for mid, r in order.items()}
    for t in ranked:
        mid = by_rank[int(flat_mid[t])]
        keep[mid].reshape(-1)[flat_pos[t]] = False

    masks = {}
    for mid, w in ws:
        masks[mid] = TileMask(TileGrid.for_shape(np.shape(w), tile_size), keep[mid])
        report.tiles[mid] = masks[mid].keep.size
        report.pruned[mid] = masks[mid].n_pruned
    report.threshold = float(flat_norm[ranked].max()) if k else 0.0
    return masks, report


def apply_mask(w, mask):
    w = np.asarray(w)
    if w.shape != (mask.grid.rows, mask.grid.cols):
        raise ValueError(f"matrix shape {w.shape} does not match mask grid "
                         f"{(mask.grid.rows, mask.grid.cols)}")
    out = w.copy()
    out[~mask.element_mask()] = 0
    return out
