"""Dense token-grid primitives shared by the scoring, recovery and pipeline layers.

A feature map is stored token-major as (B, L, C) with L = H * W in row-major
spatial order; the (B, C, H, W) view is a pure reshape/transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureGrid:
    """A batch of token feature maps with known spatial shape.

    data has shape (B, L, C); tokens are row-major over (height, width).
    """

    data: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"data must be (B, L, C), got shape {data.shape}")
        b, l, c = data.shape
        if b < 1 or c < 1:
            raise ValueError(f"need B >= 1 and C >= 1, got B={b}, C={c}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"height/width must be positive, got {self.height}x{self.width}")
        if l != self.height * self.width:
            raise ValueError(
                f"token count {l} != height*width = {self.height * self.width}"
            )
        if not np.isfinite(data).all():
            raise ValueError("feature data contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def tokens(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def spatial(self) -> np.ndarray:
        """(B, C, H, W) view of the token data."""
        b, l, c = self.data.shape
        return self.data.transpose(0, 2, 1).reshape(b, c, self.height, self.width)

    @classmethod
    def from_spatial(cls, spatial: np.ndarray) -> "FeatureGrid":
        b, c, h, w = spatial.shape
        return cls(spatial.reshape(b, c, h * w).transpose(0, 2, 1), h, w)


@dataclass(frozen=True)
class SparseTokens:
    """Tokens surviving a pruning pass, plus where they came from.

    kept_indices are strictly ascending within each batch row (canonical order).
    """

    data: np.ndarray          # (B, k, C)
    kept_indices: np.ndarray  # (B, k) int
    source_shape: tuple       # (H, W)

    def __post_init__(self):
        data = np.asarray(self.data)
        idx = np.asarray(self.kept_indices)
        h, w = self.source_shape
        if data.ndim != 3 or idx.ndim != 2:
            raise ValueError("data must be (B, k, C) and kept_indices (B, k)")
        if data.shape[:2] != idx.shape:
            raise ValueError(
                f"data shape {data.shape} inconsistent with indices {idx.shape}"
            )
        l = h * w
        if idx.size and (idx.min() < 0 or idx.max() >= l):
            raise ValueError(f"kept index out of range [0, {l})")
        if idx.shape[1] > l:
            raise ValueError(f"k={idx.shape[1]} exceeds L={l}")
        if idx.shape[1] > 1 and not (np.diff(idx, axis=1) > 0).all():
            raise ValueError("kept_indices must be strictly ascending per batch row")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "kept_indices", idx)
        object.__setattr__(self, "source_shape", (int(h), int(w)))

    @property
    def k(self) -> int:
        return self.kept_indices.shape[1]


def center_tokens(x: FeatureGrid) -> FeatureGrid:
    """Subtract the per-batch, per-channel mean over tokens."""
    centered = x.data - x.data.mean(axis=1, keepdims=True)
    return FeatureGrid(centered, x.height, x.width)


def avg_pool_3x3(x: FeatureGrid) -> FeatureGrid:
    """3x3 mean filter with same-shape output.

    Border windows are normalized by the number of in-bounds cells, so a
    constant map pools to itself exactly (no spurious border response).
    """
    sp = x.spatial()  # (B, C, H, W)
    b, c, h, w = sp.shape
    padded = np.zeros((b, c, h + 2, w + 2), dtype=sp.dtype)
    padded[:, :, 1:-1, 1:-1] = sp
    acc = np.zeros_like(sp)
    for dy in range(3):
        for dx in range(3):
            acc += padded[:, :, dy:dy + h, dx:dx + w]
    ones = np.zeros((h + 2, w + 2))
    ones[1:-1, 1:-1] = 1.0
    count = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            count += ones[dy:dy + h, dx:dx + w]
    return FeatureGrid.from_spatial(acc / count)


def gather_tokens(x: FeatureGrid, idx: np.ndarray) -> SparseTokens:
    """Select tokens by index; idx is (B, k) or (k,), sorted ascending, no dups."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim == 1:
        idx = np.broadcast_to(idx, (x.batch, idx.shape[0])).copy()
    if idx.ndim != 2 or idx.shape[0] != x.batch:
        raise ValueError(f"idx must be (B, k), got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.tokens):
        raise ValueError(f"index out of range [0, {x.tokens})")
    if idx.shape[1] > 1 and not (np.diff(idx, axis=1) > 0).all():
        raise ValueError("indices must be strictly ascending (sorted, no duplicates)")
    data = np.take_along_axis(x.data, idx[:, :, None], axis=1)
    return SparseTokens(data, idx, (x.height, x.width))


def make_coord_grid(h: int, w: int) -> np.ndarray:
    """(L, 2) array of (row, col) pairs in row-major order."""
    if h < 1 or w < 1:
        raise ValueError(f"grid dims must be positive, got {h}x{w}")
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([rows.ravel(), cols.ravel()], axis=1)
