"""Dense-map reconstruction from sparse tokens.

Three strategies: nearest-neighbor propagation (the production path),
upsampling the previous scale's output into pruned positions ("cache"),
and copying from a fixed anchor grid. Distances are squared Euclidean on
integer (row, col) coordinates; argmin ties go to the lowest kept-list
position, which for ascending kept indices means the lowest token index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import FeatureGrid, SparseTokens, make_coord_grid

STRATEGIES = ("nearest_neighbor", "cache_upsample", "anchor_copy")


@dataclass(frozen=True)
class RecoveryStrategy:
    kind: str = "nearest_neighbor"
    anchor_stride: int = 3

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown recovery kind {self.kind!r}; want one of {STRATEGIES}")
        if self.anchor_stride < 1:
            raise ValueError(f"anchor_stride must be >= 1, got {self.anchor_stride}")


def nearest_assignment(h: int, w: int, kept_indices: np.ndarray) -> np.ndarray:
    """For each of the H*W positions, the kept-list slot of its nearest kept token.

    kept_indices is (B, k); returns (B, L) int. np.argmin breaks ties at the
    first (lowest) kept-list position.
    """
    coords = make_coord_grid(h, w)  # (L, 2)
    b, k = kept_indices.shape
    if k < 1:
        raise ValueError("need at least one kept token")
    out = np.empty((b, h * w), dtype=np.int64)
    for bi in range(b):
        kept_coords = coords[kept_indices[bi]]  # (k, 2)
        diff = coords[:, None, :] - kept_coords[None, :, :]
        d2 = np.square(diff).sum(axis=2)
        out[bi] = np.argmin(d2, axis=1)
    return out


def nn_propagate(sparse: SparseTokens) -> FeatureGrid:
    """Fill every grid position with the feature of its nearest kept token."""
    h, w = sparse.source_shape
    assign = nearest_assignment(h, w, sparse.kept_indices)  # (B, L)
    dense = np.take_along_axis(sparse.data, assign[:, :, None], axis=1)
    return FeatureGrid(dense, h, w)


def cache_upsample(prev_scale: FeatureGrid, target_shape) -> FeatureGrid:
    """Nearest-neighbor upsample of a dense map to a larger grid."""
    th, tw = target_shape
    if th < prev_scale.height or tw < prev_scale.width:
        raise ValueError(
            f"target {th}x{tw} smaller than source {prev_scale.height}x{prev_scale.width}"
        )
    rows = (np.arange(th) * prev_scale.height) // th
    cols = (np.arange(tw) * prev_scale.width) // tw
    sp = prev_scale.spatial()[:, :, rows][:, :, :, cols]
    return FeatureGrid.from_spatial(sp)


def anchor_copy(sparse: SparseTokens, anchors: np.ndarray) -> FeatureGrid:
    """Kept positions keep their own features; pruned ones copy the nearest anchor.

    anchors is a 1-D token-index array and must be a subset of the kept set in
    every batch row (run selection with the anchors force-included).
    """
    anchors = np.unique(np.asarray(anchors, dtype=np.int64))
    if anchors.size == 0:
        raise ValueError("anchor set is empty")
    h, w = sparse.source_shape
    b, k, c = sparse.data.shape
    dense = np.empty((b, h * w, c), dtype=sparse.data.dtype)
    coords = make_coord_grid(h, w)
    anchor_coords = coords[anchors]
    d2 = np.square(coords[:, None, :] - anchor_coords[None, :, :]).sum(axis=2)
    nearest_anchor = anchors[np.argmin(d2, axis=1)]  # (L,) token index of copy source
    for bi in range(b):
        kept = sparse.kept_indices[bi]
        slot_of = {int(t): s for s, t in enumerate(kept)}
        missing = [a for a in anchors if int(a) not in slot_of]
        if missing:
            raise ValueError(f"anchors {missing} not in kept set (force-include them)")
        src_slots = np.array([slot_of[int(t)] for t in nearest_anchor])
        dense[bi] = sparse.data[bi, src_slots]
        dense[bi, kept] = sparse.data[bi]
    return FeatureGrid(dense, h, w)


def anchor_grid(h: int, w: int, stride: int) -> np.ndarray:
    """Token indices of the fixed stride grid used by the anchor strategy."""
    rows = np.arange(0, h, stride)
    cols = np.arange(0, w, stride)
    return (rows[:, None] * w + cols[None, :]).ravel()


def force_include(
    selection: SparseTokens, grid: FeatureGrid, scores: np.ndarray, must_keep
) -> SparseTokens:
    """Rewrite a selection so the kept set contains must_keep, count unchanged.

    Non-forced slots are refilled with the highest-scoring remaining tokens
    under the usual lowest-index tie rule. grid is the dense map the selection
    was drawn from and scores its (B, L) score matrix.
    """
    must = np.unique(np.asarray(must_keep, dtype=np.int64))
    b, k = selection.kept_indices.shape
    if must.size > k:
        raise ValueError(f"|must_keep|={must.size} exceeds k={k}")
    if must.size == 0:
        return selection
    if must.min() < 0 or must.max() >= grid.tokens:
        raise ValueError(f"must_keep index out of range [0, {grid.tokens})")
    new_idx = np.empty((b, k), dtype=np.int64)
    for bi in range(b):
        order = np.argsort(-scores[bi], kind="stable")
        free = order[~np.isin(order, must)][: k - must.size]
        new_idx[bi] = np.sort(np.concatenate([must, free]))
    data = np.take_along_axis(grid.data, new_idx[:, :, None], axis=1)
    return SparseTokens(data, new_idx, selection.source_shape)
