"""Per-token importance scoring and top-k selection.

Two complementary criteria: a structural score (magnitude of each centered
token's projection onto the approximate first principal direction, found by
power iteration) and a textural score (channel-summed squared residual
against a 3x3 local mean). The joint score is a weighted sum and drives
deterministic top-k selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import FeatureGrid, SparseTokens, avg_pool_3x3, center_tokens, gather_tokens

# Below this norm the power-iteration step is considered degenerate.
_DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class PruneParams:
    """Knobs for scoring and selection."""

    ratio: float = 0.0
    w_str: float = 0.5
    power_iters: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        if self.w_str < 0:
            raise ValueError(f"w_str must be nonnegative, got {self.w_str}")
        if self.power_iters < 1:
            raise ValueError(f"power_iters must be >= 1, got {self.power_iters}")


def first_principal_direction(x_centered: FeatureGrid, iters: int, seed: int):
    """Approximate the leading principal direction of each batch row.

    Returns (v, degenerate) where v is (B, C) with unit rows and degenerate
    is a (B,) bool mask marking rows whose covariance action vanished (those
    rows keep their seeded init direction).
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    xc = x_centered.data
    b, _, c = xc.shape
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((b, c))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    degenerate = np.zeros(b, dtype=bool)
    for _ in range(iters):
        # One covariance application: X^T (X v), without forming X^T X.
        proj = np.einsum("blc,bc->bl", xc, v)
        nxt = np.einsum("blc,bl->bc", xc, proj)
        norms = np.linalg.norm(nxt, axis=1)
        dead = norms < _DEGENERATE_NORM
        degenerate |= dead
        live = ~dead
        v = np.where(live[:, None], nxt / np.where(dead, 1.0, norms)[:, None], v)
    return v, degenerate


def structural_score(x: FeatureGrid, params: PruneParams) -> np.ndarray:
    """|projection of each centered token onto the principal direction|, (B, L)."""
    xc = center_tokens(x)
    v, degenerate = first_principal_direction(xc, params.power_iters, params.rng_seed)
    score = np.abs(np.einsum("blc,bc->bl", xc.data, v))
    score[degenerate] = 0.0
    return score


def textural_score(x: FeatureGrid) -> np.ndarray:
    """Channel-summed squared high-pass residual per token, (B, L)."""
    low = avg_pool_3x3(x)
    high = x.data - low.data
    return np.square(high).sum(axis=2)


def l2norm_score(x: FeatureGrid) -> np.ndarray:
    """Ablation baseline: L2 distance of each token from the mean token."""
    centered = x.data - x.data.mean(axis=1, keepdims=True)
    return np.linalg.norm(centered, axis=2)


def random_score(batch: int, tokens: int, seed: int) -> np.ndarray:
    """Ablation baseline: seeded uniform scores (tie-free a.s.)."""
    rng = np.random.default_rng(seed)
    return rng.random((batch, tokens))


def keep_count(tokens: int, ratio: float) -> int:
    """k = floor((1 - r) * L), clamped to at least one kept token for r < 1."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must be in [0, 1) here, got {ratio}")
    return max(1, int(np.floor((1.0 - ratio) * tokens)))


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores per row, ascending; ties favor lower index."""
    scores = np.asarray(scores)
    if not 1 <= k <= scores.shape[1]:
        raise ValueError(f"k={k} out of range for L={scores.shape[1]}")
    # Stable sort on negated scores keeps equal-score tokens in index order.
    order = np.argsort(-scores, axis=1, kind="stable")
    return np.sort(order[:, :k], axis=1)


def joint_select(x: FeatureGrid, params: PruneParams):
    """Score with the fused structural+textural criterion and keep the top k.

    Returns (SparseTokens, total_scores). ratio == 1 is rejected: a fully
    pruned scale is a pipeline-level skip, not a selection.
    """
    if params.ratio >= 1.0:
        raise ValueError("ratio = 1 means stage skip; handled by the pipeline")
    s_total = params.w_str * structural_score(x, params) + textural_score(x)
    k = keep_count(x.tokens, params.ratio)
    idx = top_k_indices(s_total, k)
    return gather_tokens(x, idx), s_total


def select_by_score(x: FeatureGrid, scores: np.ndarray, ratio: float) -> SparseTokens:
    """Top-k selection from precomputed scores (baseline strategies)."""
    if ratio >= 1.0:
        raise ValueError("ratio = 1 means stage skip; handled by the pipeline")
    k = keep_count(x.tokens, ratio)
    return gather_tokens(x, top_k_indices(scores, k))
